fn main() {
    std::process::exit(schemaprobe_cli::run(std::env::args_os()));
}
