fn main() -> std::process::ExitCode {
    cogload::cli::main_with_args(std::env::args_os())
}
