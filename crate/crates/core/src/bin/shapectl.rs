fn main() {
    std::process::exit(shapectl::cli::main_with_args(std::env::args().skip(1)));
}
