fn main() {
    std::process::exit(adadistill::harness::cli::main());
}
