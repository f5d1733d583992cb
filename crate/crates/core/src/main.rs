fn main() {
    std::process::exit(bethe_lab::cli::run(std::env::args_os()));
}
