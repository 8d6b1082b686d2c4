fn main() {
    std::process::exit(igs_mimo::cli::run(std::env::args_os()));
}
