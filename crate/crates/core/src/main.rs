fn main() -> std::process::ExitCode {
    faithdebate::cli::main()
}
