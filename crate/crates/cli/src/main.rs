fn main() {
    std::process::exit(ecflow_cli::run_main(std::env::args_os()));
}
