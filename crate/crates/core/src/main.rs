fn main() {
    std::process::exit(morpho_analogy::cli::run(std::env::args_os()));
}
