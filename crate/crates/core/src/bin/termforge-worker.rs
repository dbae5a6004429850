fn main() {
    std::process::exit(termforge::cli::main_worker(std::env::args_os()));
}
