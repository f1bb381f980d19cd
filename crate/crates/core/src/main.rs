fn main() {
    std::process::exit(rjtune::cli::run(std::env::args_os()));
}
