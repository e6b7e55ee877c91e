fn main() {
    std::process::exit(ntnsim::cli::main());
}
