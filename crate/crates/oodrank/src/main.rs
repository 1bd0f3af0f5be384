fn main() {
    oodrank::cli::init_logging();
    std::process::exit(oodrank::cli::main_with(std::env::args_os()));
}
