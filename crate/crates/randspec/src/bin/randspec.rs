fn main() {
    std::process::exit(randspec::cli::run());
}
