fn main() {
    std::process::exit(ccpo_cli::run(std::env::args_os()));
}
