fn main() {
    std::process::exit(incprune::cli::run());
}
