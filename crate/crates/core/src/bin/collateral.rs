fn main() {
    std::process::exit(stablecoin_collateral::cli::run(std::env::args_os()));
}
