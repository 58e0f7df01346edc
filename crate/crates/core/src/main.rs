fn main() {
    let code = trotter_mc::cli::main(std::env::args_os());
    std::process::exit(code);
}
