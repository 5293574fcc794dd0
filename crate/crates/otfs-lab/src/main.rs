use clap::Parser;

fn main() {
    let cli = otfs_lab::cli::Cli::parse();
    if let Err(e) = otfs_lab::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
