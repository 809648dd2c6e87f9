fn main() {
    std::process::exit(fraud_core::harness::cli_dispatch(std::env::args_os()));
}
