fn main() {
    std::process::exit(collnmf::cli::main());
}
