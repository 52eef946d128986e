fn main() {
    std::process::exit(trgl::cli::run(std::env::args_os()));
}
