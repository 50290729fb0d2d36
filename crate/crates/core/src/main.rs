fn main() {
    std::process::exit(ctxai::cli::run(std::env::args_os()));
}
