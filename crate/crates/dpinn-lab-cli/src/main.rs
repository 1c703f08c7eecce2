use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dpinn_lab_cli::cli_main(std::env::args_os()) as u8)
}
