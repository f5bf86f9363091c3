use clap::Parser;

fn main() {
    let cli = rmcq_cli::cli::Cli::parse();
    if let Err(e) = rmcq_cli::cli::run(cli) {
        eprintln!("rmcq: {e}");
        std::process::exit(e.exit_code());
    }
}
