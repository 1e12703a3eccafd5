fn main() {
    std::process::exit(subnav_cli::run(std::env::args_os()));
}
