fn main() {
    std::process::exit(gdoe::cli::main_with_exit());
}
