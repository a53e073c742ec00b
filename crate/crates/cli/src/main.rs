use clap::Parser;

fn main() {
    let cli = kyle_feedback_cli::Cli::parse();
    std::process::exit(kyle_feedback_cli::run(&cli));
}
