fn main() {
    std::process::exit(workload_reduction::cli::run(std::env::args_os()));
}
