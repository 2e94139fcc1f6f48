fn main() {
    std::process::exit(hamlearn::cli::main_with_args(std::env::args_os()));
}
