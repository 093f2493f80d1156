fn main() {
    std::process::exit(cuescreen::cli::dispatch(std::env::args_os()));
}
