use std::process::ExitCode;

fn main() -> ExitCode {
    holab::cli::run()
}
