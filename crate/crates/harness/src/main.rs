fn main() {
    std::process::exit(fluctfield_harness::cli::run(std::env::args_os()));
}
