fn main() {
    std::process::exit(projected_milstein::cli::main_with(std::env::args_os()));
}
