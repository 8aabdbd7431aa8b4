use std::process::ExitCode;

fn main() -> ExitCode {
    movetrace::cli::main_entry()
}
