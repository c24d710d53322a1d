use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(madtd::cli::run(std::env::args()) as u8)
}
