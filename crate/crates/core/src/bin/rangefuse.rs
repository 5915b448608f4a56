fn main() {
    std::process::exit(rangefuse::cli::run(std::env::args_os()));
}
