fn main() {
    std::process::exit(fdyson_cli::cli_entry(std::env::args_os()));
}
