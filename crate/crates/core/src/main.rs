fn main() {
    std::process::exit(chardir::cli::run(std::env::args_os()));
}
