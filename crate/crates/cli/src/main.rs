fn main() {
    std::process::exit(trustdrift_cli::main_with_args(std::env::args_os()));
}
