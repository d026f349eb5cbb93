fn main() {
    std::process::exit(skelfuse::cli::main());
}
