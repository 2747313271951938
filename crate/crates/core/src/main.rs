fn main() {
    std::process::exit(dynkt::cli::run_from_args(std::env::args_os()));
}
