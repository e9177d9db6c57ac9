fn main() {
    std::process::exit(mlylab_cli::run(std::env::args_os()));
}
