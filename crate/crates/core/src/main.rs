fn main() {
    std::process::exit(megp::cli::main_with_args(std::env::args_os()));
}
