fn main() {
    std::process::exit(finslercap::cli_main());
}
