static mut COUNTER: u32 = 0;

fn main() {
    let t = std::thread::spawn(|| unsafe { COUNTER += 1 });
    unsafe { COUNTER += 1; }
    t.join().unwrap();
    println!("{}", unsafe { COUNTER });
}
