fn main() {
    std::process::exit(hcnn::cli::main_with_args(std::env::args_os()));
}
