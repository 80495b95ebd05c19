fn main() {
    std::process::exit(vaxledger_node::cli::main());
}
