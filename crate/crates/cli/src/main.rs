fn main() {
    std::process::exit(uar_cli::run(std::env::args_os()));
}
