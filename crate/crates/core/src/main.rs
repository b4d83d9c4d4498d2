use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match brachisto::cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { brachisto::cli::EXIT_CONFIG } else { 0 });
        }
    };
    std::process::exit(brachisto::cli::main_with(cli));
}
