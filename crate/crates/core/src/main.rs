fn main() {
    std::process::exit(mkvlab::cli::main_with(std::env::args_os()));
}
