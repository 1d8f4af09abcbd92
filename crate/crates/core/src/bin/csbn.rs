fn main() {
    std::process::exit(csbn::cli::run_from(std::env::args_os()));
}
