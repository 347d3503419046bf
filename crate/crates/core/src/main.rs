fn main() {
    std::process::exit(cdxcorpus::cli::run_cli(std::env::args_os()));
}
