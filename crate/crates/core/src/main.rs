fn main() {
    let code = quicheck::cli::main(std::env::args_os());
    std::process::exit(code);
}
