fn main() {
    let words = [0x0100_0000u32, 0x0000_0002, 0];
    let base = words.as_ptr() as *const u8;
    let p = unsafe { base.add(1) } as *const u32;
    let value = unsafe { *p };
    println!("{}", value);
}
