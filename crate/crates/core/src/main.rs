fn main() {
    std::process::exit(tripemb::cli::run(std::env::args_os()));
}
