fn main() {
    std::process::exit(segrt::cli::run(std::env::args_os()));
}
