use std::process::ExitCode;

fn main() -> ExitCode {
    shrinknet::cli::run(std::env::args_os())
}
