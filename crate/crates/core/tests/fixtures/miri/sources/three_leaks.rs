use std::alloc::{alloc, Layout};

fn main() {
    let small = Layout::new::<u32>();
    let wide = Layout::new::<u64>();
    let pair = Layout::new::<[u16; 2]>();
    let a = unsafe { alloc(small) };
    let b = unsafe { alloc(wide) };
    let c = unsafe { alloc(pair) };
    println!("{}", !a.is_null() && !b.is_null() && !c.is_null());
}
