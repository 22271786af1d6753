fn main() {
    std::process::exit(rebuttal::cli::run());
}
