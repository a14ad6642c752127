use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(adathresh_cli::run(std::env::args_os()))
}
