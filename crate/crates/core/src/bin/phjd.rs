fn main() {
    std::process::exit(phjd_core::cli::run(std::env::args_os()));
}
