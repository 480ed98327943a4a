fn main() {
    std::process::exit(svem::cli::main_with_args(std::env::args_os()));
}
