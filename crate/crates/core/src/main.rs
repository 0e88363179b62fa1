fn main() { std::process::exit(allelic::cli::run(std::env::args_os())); }
