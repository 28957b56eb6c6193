fn main() {
    std::process::exit(specsynth::cli::cli_main(std::env::args()));
}
