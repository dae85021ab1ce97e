fn main() {
    let code = mspn_cli::run(std::env::args_os());
    std::process::exit(code);
}
