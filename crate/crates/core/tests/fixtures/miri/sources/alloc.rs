use std::alloc::{alloc, dealloc, Layout};

fn main() {
    unsafe {
        let layout = Layout::from_size_align(16, 8).unwrap();
        let p = alloc(layout) as *mut u64;
        *p = 42;
        println!("{}", *p);
        dealloc(p as *mut u8, Layout::from_size_align(8, 8).unwrap());
    }
}
