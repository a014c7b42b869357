fn main() {
    std::process::exit(skyline_evt::cli::run(std::env::args_os()));
}
