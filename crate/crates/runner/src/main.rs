use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(tdoa_runner::run_from(std::env::args_os()))
}
