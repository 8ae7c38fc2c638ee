fn digit(c: char) -> u32 {
    match c.to_digit(10) {
        Some(d) => d,
        None => unsafe { std::hint::unreachable_unchecked() },
    }
}

fn main() {
    println!("{}", digit('7') + digit('x'));
}
