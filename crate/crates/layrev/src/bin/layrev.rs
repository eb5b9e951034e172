fn main() {
    std::process::exit(layrev::cli::main());
}
