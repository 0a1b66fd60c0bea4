fn main() {
    std::process::exit(lungtex::cli::main_with_args(std::env::args_os()));
}
