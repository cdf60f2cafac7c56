fn main() {
    std::process::exit(stt_core::cli::main_with(std::env::args_os()));
}
