fn main() {
    std::process::exit(pdae_cli::run(std::env::args_os()));
}
