fn main() {
    std::process::exit(parfact::cli::run(std::env::args_os()));
}
