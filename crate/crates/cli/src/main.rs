fn main() {
    std::process::exit(dfdreg_cli::cli_main(std::env::args().collect()));
}
