fn main() {
    std::process::exit(memsl_cli::run());
}
