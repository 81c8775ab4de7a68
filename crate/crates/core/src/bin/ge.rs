fn main() {
    std::process::exit(ge_core::cli::main_with_args(std::env::args_os()));
}
