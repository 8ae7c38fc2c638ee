fn scale(a: i32) -> i32 {
    a * 10
}

fn main() {
    let f: fn(i32) -> i32 = scale;
    let g: fn(i32, i32) -> i32 = unsafe { std::mem::transmute(f) };
    println!("{}", g(4, 2));
}
