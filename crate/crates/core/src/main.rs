fn main() {
    std::process::exit(seaice_body::app::cli::main_with(std::env::args_os()));
}
