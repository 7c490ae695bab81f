fn main() {
    std::process::exit(lcscale::cli::main())
}
