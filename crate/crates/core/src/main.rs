fn main() {
    std::process::exit(fbm_averaging::cli::main_with_args(std::env::args_os()));
}
