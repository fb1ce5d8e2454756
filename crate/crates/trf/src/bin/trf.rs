use clap::Parser;

fn main() {
    let cli = trf::cli::Cli::parse();
    if let Err(e) = trf::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
