fn main() {
    std::process::exit(hubforge::cli::main());
}
