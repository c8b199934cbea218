fn main() {
    std::process::exit(hici_cli::run(std::env::args_os()));
}
