fn main() -> std::process::ExitCode {
    levy_bel_cli::main_with_args(std::env::args_os())
}
