fn main() {
    std::process::exit(speechgrade::cli::run(std::env::args_os()));
}
