fn main() {
    std::process::exit(differentia::cli::main());
}
