fn main() {
    std::process::exit(acbench::cli::main_with(std::env::args_os()));
}
