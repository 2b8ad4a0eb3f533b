fn main() {
    std::process::exit(sgfcn::cli::run_from(std::env::args_os()));
}
