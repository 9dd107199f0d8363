fn main() {
    std::process::exit(mmrl::cli::run());
}
