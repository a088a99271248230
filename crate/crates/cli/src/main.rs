fn main() {
    std::process::exit(hyperlat_cli::run(std::env::args_os()));
}
