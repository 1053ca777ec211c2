fn main() {
    std::process::exit(optoswitch::cli::run(std::env::args_os()));
}
