fn main() {
    std::process::exit(texface_cli::app::run(std::env::args_os()));
}
