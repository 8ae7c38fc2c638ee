fn hello() {
    println!("hello");
}

fn main() {
    let handlers: [fn(); 1] = [hello];
    let raw = handlers.as_ptr() as *const u8;
    let f: fn() = unsafe { std::mem::transmute(raw) };
    f();
}
