fn main() {
    std::process::exit(removal_explain::cli::run(std::env::args_os()));
}
