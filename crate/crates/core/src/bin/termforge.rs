fn main() {
    std::process::exit(termforge::cli::main_termforge(std::env::args_os()));
}
