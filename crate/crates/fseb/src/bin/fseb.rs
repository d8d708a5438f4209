fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(fseb::cli::run_cli(&argv));
}
