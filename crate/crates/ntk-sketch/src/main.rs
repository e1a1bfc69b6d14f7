fn main() {
    std::process::exit(ntk_sketch::cli::main_entry(std::env::args_os()));
}
