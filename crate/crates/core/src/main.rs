fn main() {
    std::process::exit(det3d::cli::run(std::env::args_os()));
}
