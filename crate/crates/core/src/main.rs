fn main() {
    std::process::exit(lifting::cli::run(std::env::args_os()));
}
