fn main() {
    std::process::exit(vbm3d_cli::run(std::env::args_os()));
}
