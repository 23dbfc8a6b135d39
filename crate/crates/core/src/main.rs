fn main() {
    std::process::exit(seqdecon::cli::main_with_args(std::env::args_os()));
}
