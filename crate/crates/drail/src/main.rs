use std::process::ExitCode;

fn main() -> ExitCode {
    drail::cli::main(std::env::args_os())
}
