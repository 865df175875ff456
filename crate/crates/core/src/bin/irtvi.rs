fn main() {
    std::process::exit(irtvi::cli::dispatch(std::env::args_os()));
}
