fn main() {
    std::process::exit(mpdsa::cli::main_with_args(std::env::args_os()));
}
