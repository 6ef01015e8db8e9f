fn main() {
    std::process::exit(reshuffle_cli::main_with_args(std::env::args_os()));
}
