use std::process::ExitCode;

fn main() -> ExitCode {
    clubgood::cli::main_with_args(std::env::args_os())
}
