fn main() {
    std::process::exit(tactica_core::cli::run(std::env::args_os()));
}
