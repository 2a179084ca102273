fn main() {
    std::process::exit(sirs_control::cli::run(std::env::args_os()));
}
