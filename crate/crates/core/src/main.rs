fn main() {
    std::process::exit(harbench::cli::main_with_args(std::env::args_os()));
}
