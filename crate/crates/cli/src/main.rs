use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(qsw_cli::run(std::env::args_os()))
}
