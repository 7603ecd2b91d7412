fn main() {
    std::process::exit(antsel::harness::cli_dispatch(std::env::args_os()));
}
