//! Subcommand implementations wiring the pipeline stages together.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};

use drugtrace_core::bundle::{DealerSection, MlpSection, Provenance, TrainedBundle};
use drugtrace_core::corpus::{load_dataset, Account, Dataset, Schema};
use drugtrace_core::dealer::L1Config;
use drugtrace_core::eval::{
    cross_validate_dealers, cross_validate_posts, fit_dealer_models, fit_fused_classifier,
    CvReport, DealerCvConfig, PostPipelineConfig,
};
use drugtrace_core::features::{
    assemble, read_features_csv, write_features_csv, Blacklist, FEATURE_NAMES,
};
use drugtrace_core::fusion::{FusionConfig, PostPrediction};
use drugtrace_core::multitask::TrainConfig;
use drugtrace_core::report::{render_report, FeatureRow};
use drugtrace_core::synth::{blacklist_file_content, synth_corpus, SynthConfig};

use crate::io::{build_timestamp, read_to_string, write_atomic};

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SynthArgs {
    /// JSON config mirroring the generator fields; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for posts.jsonl, accounts.jsonl, blacklist.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut config: SynthConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dataset = synth_corpus(&config)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let posts = drugtrace_core::corpus::posts_to_jsonl(&dataset.posts)?;
    let accounts = drugtrace_core::corpus::accounts_to_jsonl(&dataset.accounts)?;
    write_atomic(&args.out.join("posts.jsonl"), &posts)?;
    write_atomic(&args.out.join("accounts.jsonl"), &accounts)?;
    write_atomic(&args.out.join("blacklist.txt"), &blacklist_file_content())?;
    println!(
        "wrote {} posts, {} accounts to {}",
        dataset.posts.len(),
        dataset.accounts.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// shared post-pipeline flags
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct PostFlags {
    /// MLP training epochs.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    /// Trunk widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    pub hidden: Vec<usize>,
    /// Loss weight of relation-derived targets.
    #[arg(long, default_value_t = 0.5)]
    pub relation_weight: f64,
    /// Laplace smoothing of the naive Bayes.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Per-field vocabulary cap.
    #[arg(long, default_value_t = 1000)]
    pub vocab_cap: usize,
    /// Image-classifier weight in decision-level fusion.
    #[arg(long, default_value_t = 0.5)]
    pub w_image: f64,
    /// Decision threshold on the fused probability.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

impl PostFlags {
    fn to_config(&self, seed: u64) -> PostPipelineConfig {
        PostPipelineConfig {
            mlp: TrainConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                seed,
                learning_rate: self.learning_rate,
                relation_weight: self.relation_weight,
                hidden: self.hidden.clone(),
                ..TrainConfig::default()
            },
            alpha: self.alpha,
            vocab_cap: self.vocab_cap,
            fusion: FusionConfig {
                w_image: self.w_image,
                threshold: self.threshold,
            },
        }
    }

    fn echo(&self, seed: u64) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("epochs".into(), self.epochs.to_string());
        map.insert("batch_size".into(), self.batch_size.to_string());
        map.insert("learning_rate".into(), self.learning_rate.to_string());
        map.insert(
            "hidden".into(),
            self.hidden
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        map.insert("relation_weight".into(), self.relation_weight.to_string());
        map.insert("alpha".into(), self.alpha.to_string());
        map.insert("vocab_cap".into(), self.vocab_cap.to_string());
        map.insert("w_image".into(), self.w_image.to_string());
        map.insert("threshold".into(), self.threshold.to_string());
        map.insert("seed".into(), seed.to_string());
        map
    }
}

// ---------------------------------------------------------------------------
// train-post
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct TrainPostArgs {
    /// JSONL post corpus with labels.
    #[arg(long)]
    pub posts: PathBuf,
    /// Output bundle path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub flags: PostFlags,
}

pub fn train_post(args: TrainPostArgs) -> Result<()> {
    let dataset = load_dataset(&args.posts, Schema::Posts)?;
    let cfg = args.flags.to_config(args.seed);
    let posts: Vec<&drugtrace_core::corpus::Post> = dataset.posts.iter().collect();
    let classifier = fit_fused_classifier(&posts, &cfg)?;

    let mut bundle = TrainedBundle::new(Provenance {
        seed: args.seed,
        config: args.flags.echo(args.seed),
        created_unix: build_timestamp(),
    });
    bundle.tfidf = Some(classifier.text.tfidf);
    bundle.nb = Some(classifier.text.nb);
    bundle.mlp = Some(MlpSection {
        model: classifier.mlp,
        config: cfg.mlp,
    });
    bundle.fusion = Some(classifier.fusion);
    write_atomic(&args.out, &bundle.to_canonical_json()?)?;
    println!("wrote bundle to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// classify-posts
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ClassifyPostsArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub posts: PathBuf,
    /// Output predictions, one JSON object per line.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn classify_posts(args: ClassifyPostsArgs) -> Result<()> {
    let bundle = TrainedBundle::load(&args.bundle)?;
    let classifier = bundle.fused_classifier()?;
    let dataset = load_dataset(&args.posts, Schema::Posts)?;
    let posts: Vec<&drugtrace_core::corpus::Post> = dataset.posts.iter().collect();
    let predictions = classifier.classify(&posts)?;
    let mut out = String::new();
    for p in &predictions {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    write_atomic(&args.out, &out)?;
    println!("classified {} posts", predictions.len());
    Ok(())
}

fn load_predictions(path: &Path) -> Result<HashMap<String, bool>> {
    let content = read_to_string(path)?;
    let mut map = HashMap::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PostPrediction = serde_json::from_str(line)
            .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        map.insert(p.post_id, p.decision);
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// extract-accounts
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ExtractAccountsArgs {
    #[arg(long)]
    pub accounts: PathBuf,
    /// Predictions JSONL from classify-posts.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Transaction phrase list, one per line.
    #[arg(long)]
    pub blacklist: PathBuf,
    /// Output feature CSV.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn extract_accounts(args: ExtractAccountsArgs) -> Result<()> {
    let dataset = load_dataset(&args.accounts, Schema::Accounts)?;
    let decisions = load_predictions(&args.predictions)?;
    let blacklist = Blacklist::parse(&read_to_string(&args.blacklist)?)?;
    let rows: Result<Vec<_>> = dataset
        .accounts
        .iter()
        .map(|account| {
            let features = assemble(account, &decisions, &blacklist)?;
            Ok((account.id.clone(), features))
        })
        .collect();
    write_atomic(&args.out, &write_features_csv(&rows?)?)?;
    println!("extracted features for {} accounts", dataset.accounts.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// train-dealer
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct TrainDealerArgs {
    /// Feature dump from extract-accounts.
    #[arg(long)]
    pub features: PathBuf,
    /// Accounts JSONL carrying expert dealer labels.
    #[arg(long)]
    pub accounts: PathBuf,
    /// Expert id whose labels supervise training.
    #[arg(long)]
    pub labels: String,
    /// Output bundle path.
    #[arg(long)]
    pub out: PathBuf,
    /// Existing bundle to extend with the dealer sections.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    /// Run L1 feature selection and refit on the survivors.
    #[arg(long)]
    pub select: bool,
    /// Coefficient magnitude below which a feature is dropped.
    #[arg(long, default_value_t = 1e-3)]
    pub select_epsilon: f64,
    /// L1 strength of the refit after selection.
    #[arg(long, default_value_t = 0.0)]
    pub refit_lambda: f64,
}

fn expert_labels_for(
    accounts: &[Account],
    ids: &[String],
    expert: &str,
) -> Result<Vec<bool>> {
    let available: std::collections::BTreeSet<&str> = accounts
        .iter()
        .flat_map(|a| a.dealer_labels.keys())
        .map(String::as_str)
        .collect();
    if !available.contains(expert) {
        bail!(
            "unknown expert id `{expert}`; available: {}",
            available.into_iter().collect::<Vec<_>>().join(", ")
        );
    }
    let by_id: HashMap<&str, &Account> =
        accounts.iter().map(|a| (a.id.as_str(), a)).collect();
    ids.iter()
        .map(|id| {
            let account = by_id
                .get(id.as_str())
                .ok_or_else(|| anyhow!("account {id} not found in accounts file"))?;
            account
                .dealer_labels
                .get(expert)
                .copied()
                .ok_or_else(|| anyhow!("account {id} has no label from expert {expert}"))
        })
        .collect()
}

pub fn train_dealer(args: TrainDealerArgs) -> Result<()> {
    let rows = read_features_csv(&read_to_string(&args.features)?)?;
    let accounts = load_dataset(&args.accounts, Schema::Accounts)?.accounts;
    let ids: Vec<String> = rows.iter().map(|(id, _)| id.clone()).collect();
    let labels = expert_labels_for(&accounts, &ids, &args.labels)?;
    let features: Vec<Vec<f64>> = rows.into_iter().map(|(_, v)| v).collect();

    let l1 = L1Config {
        lambda: args.lambda,
        max_iters: args.max_iters,
        select_epsilon: args.select_epsilon,
        ..L1Config::default()
    };
    let (normalizer, fit, retained) =
        fit_dealer_models(&features, &labels, &l1, args.select, args.refit_lambda)?;

    let mut bundle = match &args.bundle {
        Some(path) => TrainedBundle::load(path)?,
        None => TrainedBundle::new(Provenance {
            seed: 0,
            config: BTreeMap::new(),
            created_unix: build_timestamp(),
        }),
    };
    for (key, value) in [
        ("dealer.lambda", args.lambda.to_string()),
        ("dealer.labels", args.labels.clone()),
        ("dealer.select", args.select.to_string()),
        ("dealer.select_epsilon", args.select_epsilon.to_string()),
        ("dealer.refit_lambda", args.refit_lambda.to_string()),
    ] {
        bundle.provenance.config.insert(key.to_string(), value);
    }
    bundle.normalizer = Some(normalizer);
    bundle.dealer_lr = Some(DealerSection {
        model: fit.model,
        feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        retained,
    });
    write_atomic(&args.out, &bundle.to_canonical_json()?)?;
    println!("wrote dealer model to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// detect-dealers
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct DetectDealersArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Output CSV of flagged accounts (probability >= 0.5).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn detect_dealers(args: DetectDealersArgs) -> Result<()> {
    let bundle = TrainedBundle::load(&args.bundle)?;
    let (normalizer, dealer) = bundle.dealer_section()?;
    let rows = read_features_csv(&read_to_string(&args.features)?)?;
    let mut out = String::from("account_id,probability\n");
    let mut flagged = 0;
    for (id, values) in rows {
        let x = normalizer.apply(&values)?;
        let p = drugtrace_core::dealer::predict_dealer_prob(&dealer.model, &x)?;
        if p >= 0.5 {
            out.push_str(&format!("{id},{p:.6}\n"));
            flagged += 1;
        }
    }
    write_atomic(&args.out, &out)?;
    println!("flagged {flagged} accounts");
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Posts,
    Dealers,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    /// Post corpus (required for posts mode; supplies web posts in
    /// dealers mode).
    #[arg(long)]
    pub posts: Option<PathBuf>,
    /// Accounts JSONL (dealers mode).
    #[arg(long)]
    pub accounts: Option<PathBuf>,
    /// Transaction phrase list (dealers mode).
    #[arg(long)]
    pub blacklist: Option<PathBuf>,
    /// Expert ids; with two, each is evaluated with the other training.
    #[arg(long, value_delimiter = ',')]
    pub experts: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output report CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: PostFlags,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub select_epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub refit_lambda: f64,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = args.flags.to_config(args.seed);
    let report = match args.mode {
        EvalMode::Posts => {
            let posts = args
                .posts
                .as_ref()
                .ok_or_else(|| anyhow!("--posts is required in posts mode"))?;
            let dataset = load_dataset(posts, Schema::Posts)?;
            cross_validate_posts(&dataset, &cfg, args.k, args.seed)?.report
        }
        EvalMode::Dealers => {
            let accounts = args
                .accounts
                .as_ref()
                .ok_or_else(|| anyhow!("--accounts is required in dealers mode"))?;
            let blacklist_path = args
                .blacklist
                .as_ref()
                .ok_or_else(|| anyhow!("--blacklist is required in dealers mode"))?;
            let blacklist = Blacklist::parse(&read_to_string(blacklist_path)?)?;
            let mut dataset = load_dataset(accounts, Schema::Accounts)?;
            if let Some(posts) = &args.posts {
                dataset.posts = load_dataset(posts, Schema::Posts)?.posts;
            }
            let experts = resolve_experts(&args.experts, &dataset)?;
            let mut rows = Vec::new();
            for (train_expert, eval_expert) in expert_pairs(&experts) {
                let dealer_cfg = DealerCvConfig {
                    post: cfg.clone(),
                    l1: L1Config {
                        lambda: args.lambda,
                        select_epsilon: args.select_epsilon,
                        ..L1Config::default()
                    },
                    refit_lambda: args.refit_lambda,
                    train_expert,
                    eval_expert,
                };
                let outcome =
                    cross_validate_dealers(&dataset, &blacklist, &dealer_cfg, args.k, args.seed)?;
                rows.extend(outcome.report.rows);
            }
            CvReport { rows }
        }
    };
    write_atomic(&args.out, &report.to_csv())?;
    println!("wrote report to {}", args.out.display());
    Ok(())
}

fn resolve_experts(requested: &[String], dataset: &Dataset) -> Result<Vec<String>> {
    if !requested.is_empty() {
        return Ok(requested.to_vec());
    }
    let available: std::collections::BTreeSet<String> = dataset
        .accounts
        .iter()
        .flat_map(|a| a.dealer_labels.keys().cloned())
        .collect();
    if available.is_empty() {
        bail!("accounts carry no expert labels");
    }
    Ok(available.into_iter().collect())
}

/// (train, eval) pairings: with one expert it trains and evaluates on the
/// same labels; with more, each expert is scored with a model trained on
/// the next one's labels.
fn expert_pairs(experts: &[String]) -> Vec<(String, String)> {
    match experts {
        [single] => vec![(single.clone(), single.clone())],
        _ => (0..experts.len())
            .map(|i| {
                let eval = experts[i].clone();
                let train = experts[(i + 1) % experts.len()].clone();
                (train, eval)
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ReportArgs {
    /// Feature dump from extract-accounts.
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for the SVG panels.
    #[arg(long)]
    pub out: PathBuf,
    /// Accounts JSONL supplying dealer labels for group comparison.
    #[arg(long)]
    pub accounts: Option<PathBuf>,
    /// Expert whose labels split dealers from non-dealers.
    #[arg(long)]
    pub expert: Option<String>,
}

pub fn report(args: ReportArgs) -> Result<()> {
    let rows = read_features_csv(&read_to_string(&args.features)?)?;
    let labels: Option<HashMap<String, bool>> = match (&args.accounts, &args.expert) {
        (Some(path), Some(expert)) => {
            let accounts = load_dataset(path, Schema::Accounts)?.accounts;
            let ids: Vec<String> = rows.iter().map(|(id, _)| id.clone()).collect();
            let labels = expert_labels_for(&accounts, &ids, expert)?;
            Some(ids.into_iter().zip(labels).collect())
        }
        (None, None) => None,
        _ => bail!("--accounts and --expert must be given together"),
    };
    let feature_rows: Vec<FeatureRow> = rows
        .into_iter()
        .map(|(account_id, values)| {
            let dealer = labels.as_ref().map(|l| l[&account_id]);
            FeatureRow {
                account_id,
                values,
                dealer,
            }
        })
        .collect();
    let panels = render_report(&feature_rows)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for (name, svg) in &panels {
        write_atomic(&args.out.join(name), svg)?;
    }
    println!("wrote {} panels to {}", panels.len(), args.out.display());
    Ok(())
}
