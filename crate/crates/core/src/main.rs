fn main() {
    std::process::exit(tabular_nn::cli::run(std::env::args_os()));
}
