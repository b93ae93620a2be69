use clap::Parser;

fn main() {
    let cli = avoss::cli::Cli::parse();
    if let Err(err) = avoss::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
