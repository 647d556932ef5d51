use clap::Parser;

fn main() {
    let cli = sbsc::cli::Cli::parse();
    if let Err(e) = sbsc::cli::dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
