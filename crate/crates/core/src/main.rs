fn main() {
    std::process::exit(rvc::cli::dispatch(std::env::args_os()));
}
