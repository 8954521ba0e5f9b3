fn main() {
    std::process::exit(pore::cli::main_with_args(std::env::args_os()));
}
