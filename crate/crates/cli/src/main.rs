fn main() {
    std::process::exit(medctx_cli::run_command(std::env::args_os()));
}
