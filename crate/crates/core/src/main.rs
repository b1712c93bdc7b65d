fn main() {
    std::process::exit(critex::cli::run(std::env::args_os()));
}
