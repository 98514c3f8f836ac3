fn main() {
    std::process::exit(susyqm::cli::run(std::env::args_os()));
}
