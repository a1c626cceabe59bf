fn main() {
    std::process::exit(kernexp::cli::main_with_args(std::env::args_os()));
}
