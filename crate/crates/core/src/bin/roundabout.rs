fn main() {
    std::process::exit(roundabout_core::cli::main_with_args(std::env::args_os()));
}
