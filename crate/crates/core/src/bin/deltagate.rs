fn main() -> std::process::ExitCode {
    deltagate::cli::main()
}
