fn main() {
    std::process::exit(bohmflow::cli::main_with(std::env::args_os()));
}
