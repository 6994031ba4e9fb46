fn main() {
    std::process::exit(mgan_core::cli::run(std::env::args_os()));
}
