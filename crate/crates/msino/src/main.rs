fn main() {
    std::process::exit(msino::harness::cli::run_cli());
}
