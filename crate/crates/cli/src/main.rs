use clap::Parser;

fn main() {
    let cli = road_stereo_cli::Cli::parse();
    if let Err(e) = road_stereo_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
