fn main() {
    std::process::exit(structlab::cli::run(std::env::args_os()));
}
