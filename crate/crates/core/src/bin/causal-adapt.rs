fn main() {
    std::process::exit(causal_adapt::cli::run(std::env::args_os()));
}
