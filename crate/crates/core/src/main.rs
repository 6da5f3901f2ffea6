fn main() {
    std::process::exit(hlm::cli::main_with_args(std::env::args_os()));
}
