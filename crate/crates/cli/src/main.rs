fn main() -> std::process::ExitCode {
    radlabel_cli::main_entry()
}
