fn main() -> std::process::ExitCode {
    vctx_service::cli::main()
}
