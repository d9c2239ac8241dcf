fn main() {
    std::process::exit(gwmcmc::cli::dispatch(std::env::args_os()));
}
