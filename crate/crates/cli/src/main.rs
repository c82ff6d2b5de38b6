fn main() {
    std::process::exit(ribgraph_cli::main_with_args(std::env::args_os()));
}
