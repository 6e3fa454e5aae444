fn main() {
    std::process::exit(erbm_cli::main_with_args(std::env::args_os()));
}
