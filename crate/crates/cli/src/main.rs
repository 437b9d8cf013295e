fn main() {
    std::process::exit(nvsim_cli::main_with_args(std::env::args_os()));
}
