fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(npti_app::cli::main_with_args(argv));
}
