fn main() -> std::process::ExitCode {
    qkd_core::cli::main()
}
