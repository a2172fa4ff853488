fn main() {
    std::process::exit(turntaking::cli::main_with_args(std::env::args_os()));
}
