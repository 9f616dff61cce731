fn main() {
    std::process::exit(crackgan::cli::run(std::env::args_os()));
}
