fn main() -> std::process::ExitCode {
    cm3::cli::main()
}
