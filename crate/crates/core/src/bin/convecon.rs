fn main() {
    std::process::exit(convecon::cli::main_entry());
}
