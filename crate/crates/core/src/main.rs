use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(fieldlab::cli::main_with(std::env::args_os()))
}
