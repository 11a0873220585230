fn main() {
    std::process::exit(uncmap::cli::run(std::env::args_os()));
}
