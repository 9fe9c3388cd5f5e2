//! Print the clause system of a source file.

fn main() {
    let path = std::env::args().nth(1).expect("usage: chc FILE");
    let src = std::fs::read_to_string(&path).expect("readable file");
    let prog = hcv_core::frontend::load(&src).unwrap_or_else(|e| panic!("{e}"));
    let sys = hcv_core::encoder::encode_program(&prog).unwrap_or_else(|e| panic!("{e}"));
    print!("{}", hcv_core::encoder::text::render_system(&sys));
}
