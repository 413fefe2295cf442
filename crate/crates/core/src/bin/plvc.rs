fn main() -> std::process::ExitCode {
    plvc::cli::main_entry()
}
