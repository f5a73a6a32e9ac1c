fn main() -> std::process::ExitCode {
    ehr_scaling::cli::main()
}
