fn main() {
    std::process::exit(domain_sieve::cli::main_with_args(std::env::args_os()));
}
