fn main() {
    std::process::exit(stochinf::cli::run(std::env::args_os()));
}
