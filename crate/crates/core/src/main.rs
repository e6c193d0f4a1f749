fn main() -> std::process::ExitCode {
    eagerfs::cli::main()
}
