fn main() {
    std::process::exit(blinkid::cli::run(std::env::args_os()));
}
