fn main() {
    std::process::exit(blowup_harness::commands::main_with_args(std::env::args_os()));
}
