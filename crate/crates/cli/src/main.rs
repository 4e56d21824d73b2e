//! drugtrace: classify drug-related posts from image embeddings and text,
//! profile account behavior, and flag likely dealer accounts.

mod commands;
mod io;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "drugtrace",
    version,
    about = "Drug-related post classification and dealer-account detection pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus (posts.jsonl, accounts.jsonl,
    /// blacklist.txt).
    Synth(commands::SynthArgs),
    /// Train the post-level classifiers and write a model bundle.
    TrainPost(commands::TrainPostArgs),
    /// Classify posts with a trained bundle, one prediction per line.
    ClassifyPosts(commands::ClassifyPostsArgs),
    /// Extract account behavior features from per-post predictions.
    ExtractAccounts(commands::ExtractAccountsArgs),
    /// Train the dealer-account classifier on a feature dump.
    TrainDealer(commands::TrainDealerArgs),
    /// Flag accounts whose dealer probability reaches 0.5.
    DetectDealers(commands::DetectDealersArgs),
    /// Cross-validated evaluation of post recognition or dealer detection.
    Evaluate(commands::EvaluateArgs),
    /// Render the SVG report panels from a feature dump.
    Report(commands::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::TrainPost(args) => commands::train_post(args),
        Command::ClassifyPosts(args) => commands::classify_posts(args),
        Command::ExtractAccounts(args) => commands::extract_accounts(args),
        Command::TrainDealer(args) => commands::train_dealer(args),
        Command::DetectDealers(args) => commands::detect_dealers(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Report(args) => commands::report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
