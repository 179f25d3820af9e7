fn main() {
    std::process::exit(tsbias_cli::run(std::env::args_os()));
}
