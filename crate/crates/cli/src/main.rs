fn main() {
    std::process::exit(polya_forest_cli::run(std::env::args_os()));
}
