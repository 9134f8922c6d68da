use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = taudl::cli::Cli::parse();
    if let Err(e) = taudl::cli::run(cli) {
        eprintln!("{}", taudl::cli::error_line(&e));
        std::process::exit(e.exit_code());
    }
}
