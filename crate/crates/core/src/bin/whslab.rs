fn main() {
    std::process::exit(whslab::cli::main_with_args(std::env::args_os()));
}
