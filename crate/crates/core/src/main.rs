fn main() {
    std::process::exit(nmt_distill::cli::run(std::env::args_os()));
}
