fn main() {
    std::process::exit(detkit::cli::main());
}
