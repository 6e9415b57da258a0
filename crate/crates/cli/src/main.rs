fn main() {
    std::process::exit(degen_relax_cli::run(std::env::args_os()));
}
