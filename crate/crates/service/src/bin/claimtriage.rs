use std::process::ExitCode;

fn main() -> ExitCode {
    claimtriage_service::cli::main_with(std::env::args_os())
}
