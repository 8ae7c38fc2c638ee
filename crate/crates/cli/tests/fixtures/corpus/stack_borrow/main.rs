fn main() {
    let mut data = [1i32, 2, 3];
    let first = &mut data[0] as *mut i32;
    let view = &mut data;
    view[1] += 10;
    unsafe { *first += 100; }
    println!("{:?}", data);
}
