fn main() {
    std::process::exit(ioncodesign::harness::cli_main(std::env::args_os()));
}
