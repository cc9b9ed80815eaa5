fn main() {
    std::process::exit(segeval::run(std::env::args_os()));
}
