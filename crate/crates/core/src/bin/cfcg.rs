fn main() -> std::process::ExitCode {
    cyclefree::cli::main()
}
