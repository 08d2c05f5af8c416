fn main() -> std::process::ExitCode {
    synapseroute::cli::run(std::env::args_os())
}
