fn main() {
    std::process::exit(infometric::cli::main_with_args(std::env::args_os()));
}
