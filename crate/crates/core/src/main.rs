fn main() {
    std::process::exit(bkks::cli::run(std::env::args_os()));
}
