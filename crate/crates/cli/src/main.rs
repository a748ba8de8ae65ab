fn main() {
    eprintln!("subrk: not yet wired");
    std::process::exit(1);
}
