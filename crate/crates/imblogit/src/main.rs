fn main() {
    std::process::exit(imblogit::cli::run());
}
