fn main() {
    std::process::exit(nce_core::cli::run(std::env::args_os()));
}
