use std::process::ExitCode;

fn main() -> ExitCode {
    oqcc::main_entry()
}
