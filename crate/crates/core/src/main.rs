fn main() {
    std::process::exit(bergm::cli::main_with_args(std::env::args_os()));
}
