fn main() {
    std::process::exit(ces_qkd_cli::main_with_args(std::env::args_os()));
}
