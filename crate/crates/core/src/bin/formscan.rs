fn main() {
    std::process::exit(formscan::cli::run(std::env::args_os()));
}
