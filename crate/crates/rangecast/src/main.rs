fn main() {
    std::process::exit(rangecast::cli::run(std::env::args_os()));
}
