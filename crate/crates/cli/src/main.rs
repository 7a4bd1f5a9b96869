use clap::Parser;

fn main() {
    let cli = varcomm_cli::Cli::parse();
    if let Err(e) = varcomm_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
