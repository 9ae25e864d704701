fn main() {
    std::process::exit(courantlab::cli::run_cli());
}
