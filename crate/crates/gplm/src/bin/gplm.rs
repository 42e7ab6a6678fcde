fn main() {
    std::process::exit(gplm::cli::main());
}
