fn main() {
    std::process::exit(mfmig::cli::main());
}
