use std::process::ExitCode;

fn main() -> ExitCode {
    let code = searchrag_core::harness::cli::run_cli(std::env::args_os());
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
