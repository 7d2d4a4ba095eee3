fn main() {
    std::process::exit(mutual_holding::cli::run(std::env::args()));
}
