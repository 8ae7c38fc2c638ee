use std::sync::Mutex;

static LOCK: Mutex<u32> = Mutex::new(0);

fn bump() {
    *LOCK.lock().unwrap() += 1;
}

fn main() {
    let guard = LOCK.lock().unwrap();
    let worker = std::thread::spawn(bump);
    worker.join().unwrap();
    println!("{}", *guard);
}
