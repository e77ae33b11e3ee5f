fn main() {
    std::process::exit(mmrec::cli::main());
}
