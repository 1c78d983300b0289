fn main() {
    std::process::exit(neutral_spde::cli::run(std::env::args_os()));
}
