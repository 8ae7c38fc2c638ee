fn main() {
    let owner = Box::new(5i32);
    let p = &*owner as *const i32;
    drop(owner);
    let value = unsafe { *p };
    println!("{}", value);
}
