fn main() {
    std::process::exit(oscnet::cli::run_from(std::env::args_os()));
}
