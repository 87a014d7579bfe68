fn main() {
    std::process::exit(selfopt::harness::cli_main(std::env::args_os()));
}
