fn main() {
    std::process::exit(lidarfield::cli::run(std::env::args_os()));
}
