use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FIR_LOG_LEVEL", "info"))
        .format_timestamp(None)
        .init();
    let cli = fir_cli::Cli::parse();
    if let Err(e) = fir_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
