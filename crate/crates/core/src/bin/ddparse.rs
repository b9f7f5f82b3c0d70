use std::process::ExitCode;

fn main() -> ExitCode {
    ddparse::cli::main_with_args(std::env::args_os())
}
