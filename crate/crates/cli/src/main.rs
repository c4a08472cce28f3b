use clap::Parser;

fn main() {
    let cli = xbar_cli::Cli::parse();
    if let Err(e) = xbar_cli::execute(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
