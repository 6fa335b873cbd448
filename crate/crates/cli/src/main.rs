fn main() {
    std::process::exit(routinesig_cli::run(std::env::args_os()));
}
