use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(xxz_transport::cli::run_cli() as u8)
}
