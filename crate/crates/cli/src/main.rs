use clap::Parser;

fn main() {
    let cli = ssdal_cli::Cli::parse();
    if let Err(e) = ssdal_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
