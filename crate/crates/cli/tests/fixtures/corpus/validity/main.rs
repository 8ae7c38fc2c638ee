fn main() {
    let raw: u8 = 3;
    let flag = unsafe { std::mem::transmute::<u8, bool>(raw) };
    println!("{}", flag);
}
