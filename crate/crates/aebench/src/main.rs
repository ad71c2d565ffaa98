fn main() -> std::process::ExitCode {
    aebench::cli::main_exit()
}
