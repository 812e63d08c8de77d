fn main() {
    std::process::exit(textcycle::cli::dispatch(std::env::args_os()));
}
