fn main() {
    std::process::exit(ssmkit::cli::run(std::env::args_os()));
}
