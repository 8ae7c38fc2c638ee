fn main() {
    let x = 7i32;
    let addr = &x as *const i32 as usize;
    let p: *const i32 = unsafe { std::mem::transmute(addr) };
    println!("{}", unsafe { *p });
}
