fn main() {
    std::process::exit(gridft::cli::run(std::env::args_os()));
}
