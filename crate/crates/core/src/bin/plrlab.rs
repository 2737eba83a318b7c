fn main() {
    std::process::exit(plrlab::cli::run_from(std::env::args_os()));
}
