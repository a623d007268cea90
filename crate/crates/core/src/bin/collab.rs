fn main() {
    std::process::exit(collab_langevin::cli::main_with_args(std::env::args_os()));
}
