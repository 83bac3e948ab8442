fn main() -> std::process::ExitCode {
    env_logger::init();
    gp_isomap::cli::main_with_args(std::env::args_os())
}
