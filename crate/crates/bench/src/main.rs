fn main() {
    std::process::exit(flowlab_bench::cli_main(std::env::args_os()));
}
