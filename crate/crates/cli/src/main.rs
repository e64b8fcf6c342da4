fn main() {
    std::process::exit(langevin_deviations_cli::run());
}
