fn main() -> std::process::ExitCode {
    growformer::cli::main_with_args(std::env::args_os())
}
