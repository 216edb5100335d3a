fn main() {
    std::process::exit(intermittent::cli::cli(std::env::args_os()));
}
