fn add_into(dst: &mut i32, src: &i32) {
    *dst += *src;
}

fn main() {
    let mut x = 5;
    let p = &mut x as *mut i32;
    unsafe { add_into(&mut *p, &*p); }
    println!("{}", x);
}
