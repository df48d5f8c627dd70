fn main() {
    std::process::exit(cavity_cli::run_from_args(std::env::args_os()));
}
