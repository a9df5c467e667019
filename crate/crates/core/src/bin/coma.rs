fn main() {
    std::process::exit(coma::cli::main_with(std::env::args_os()));
}
