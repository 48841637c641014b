fn main() {
    tvr_core::cli::init_logging();
    std::process::exit(tvr_core::cli::run(std::env::args_os()));
}
