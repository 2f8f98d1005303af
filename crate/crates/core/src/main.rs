fn main() {
    std::process::exit(cfcontrol::cli::run_command(std::env::args_os()));
}
