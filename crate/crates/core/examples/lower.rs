fn main() {
    let path = std::env::args().nth(1).expect("file");
    let src = std::fs::read_to_string(path).unwrap();
    let p = hcv_core::frontend::load(&src).unwrap();
    print!("{p}");
}
