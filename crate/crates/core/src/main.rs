fn main() {
    std::process::exit(timechange::cli::main_with_args(std::env::args_os()));
}
