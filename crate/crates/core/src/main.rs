fn main() {
    std::process::exit(slpc::cli::main_with_args(std::env::args_os()));
}
