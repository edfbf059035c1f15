fn main() {
    std::process::exit(latentgeo::cli::run(std::env::args_os()));
}
