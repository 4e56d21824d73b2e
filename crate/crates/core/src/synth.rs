//! Seeded synthetic-corpus generator.
//!
//! Produces a desk-scale stand-in for a real annotated corpus: dealer
//! accounts post drug-related content at a higher rate, skew toward
//! midnight/late-night hours, keep a low following/follower ratio, and
//! leak transaction phrases into bios and comments. Drug-post embeddings
//! are drawn from a cluster separated from negatives; web-sourced
//! sub-class posts sit in sub-clusters near the drug center.
//!
//! Everything is a pure function of the config (including its seed):
//! the same config yields byte-identical JSONL output.

use std::collections::BTreeMap;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Account, Dataset, Label, Post, Source};
use crate::error::{Error, Result};

/// Transaction phrases the generator plants in dealer bios/comments.
/// A matching blacklist file (one phrase per line) makes the generated
/// corpus runnable end to end.
pub const TRANSACTION_PHRASES: &[&str] = &[
    "dm to order",
    "cash app only",
    "shipping available",
    "prices in bio",
    "hit the plug line",
];

/// Expert ids attached to generated dealer labels. `exp1` carries the
/// ground truth; `exp2` disagrees at the configured rate.
pub const EXPERT_IDS: [&str; 2] = ["exp1", "exp2"];

/// Per-feature effect sizes separating dealers from non-dealers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalConfig {
    /// Probability that a dealer's post is drug-related.
    pub dealer_drug_rate: f64,
    /// Probability that a non-dealer's post is drug-related.
    pub nondealer_drug_rate: f64,
    /// Extra probability mass a dealer's drug post lands in hours 0-5 or
    /// 18-23 (on top of the uniform hour draw).
    pub midnight_bias: f64,
    /// Target following/followers ratio for dealers.
    pub dealer_follow_ratio: f64,
    /// Target following/followers ratio for non-dealers.
    pub nondealer_follow_ratio: f64,
    /// Probability a dealer account carries a transaction phrase.
    pub dealer_blacklist_prob: f64,
    /// Probability a non-dealer account carries one anyway.
    pub nondealer_blacklist_prob: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            dealer_drug_rate: 0.6,
            nondealer_drug_rate: 0.12,
            midnight_bias: 0.6,
            dealer_follow_ratio: 0.15,
            nondealer_follow_ratio: 1.3,
            dealer_blacklist_prob: 0.85,
            nondealer_blacklist_prob: 0.04,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_accounts: usize,
    /// Fraction of accounts that are dealers, in [0,1].
    pub dealer_fraction: f64,
    pub posts_per_account_min: usize,
    pub posts_per_account_max: usize,
    pub signal: SignalConfig,
    /// Size of the benign background vocabulary.
    pub background_vocab_size: usize,
    /// Size of the drug-signal vocabulary.
    pub drug_vocab_size: usize,
    pub embedding_dim: usize,
    /// Euclidean distance between the negative and drug embedding centers.
    pub cluster_separation: f64,
    /// Web-sourced posts generated per sub-class (weed/pills/syrup).
    pub web_posts_per_class: usize,
    /// Probability that exp2 flips exp1's dealer verdict.
    pub expert_disagreement: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_accounts: 500,
            dealer_fraction: 0.1,
            posts_per_account_min: 8,
            posts_per_account_max: 30,
            signal: SignalConfig::default(),
            background_vocab_size: 400,
            drug_vocab_size: 60,
            embedding_dim: 16,
            cluster_separation: 2.5,
            web_posts_per_class: 80,
            expert_disagreement: 0.06,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("dealer_fraction", self.dealer_fraction),
            ("signal.dealer_drug_rate", self.signal.dealer_drug_rate),
            ("signal.nondealer_drug_rate", self.signal.nondealer_drug_rate),
            ("signal.midnight_bias", self.signal.midnight_bias),
            ("signal.dealer_blacklist_prob", self.signal.dealer_blacklist_prob),
            ("signal.nondealer_blacklist_prob", self.signal.nondealer_blacklist_prob),
            ("expert_disagreement", self.expert_disagreement),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} not in [0,1]")));
            }
        }
        if self.n_accounts < 10 {
            return Err(Error::invalid(format!(
                "n_accounts must be >= 10, got {}",
                self.n_accounts
            )));
        }
        if self.posts_per_account_min == 0 || self.posts_per_account_min > self.posts_per_account_max {
            return Err(Error::invalid(format!(
                "invalid posts_per_account range {}..={}",
                self.posts_per_account_min, self.posts_per_account_max
            )));
        }
        if self.posts_per_account_max > crate::corpus::DEFAULT_POSTS_PER_ACCOUNT_CAP {
            return Err(Error::invalid(format!(
                "posts_per_account_max {} exceeds the per-account cap {}",
                self.posts_per_account_max,
                crate::corpus::DEFAULT_POSTS_PER_ACCOUNT_CAP
            )));
        }
        if self.embedding_dim == 0 {
            return Err(Error::invalid("embedding_dim must be positive"));
        }
        if self.cluster_separation < 0.0 {
            return Err(Error::invalid("cluster_separation must be >= 0"));
        }
        if self.background_vocab_size == 0 || self.drug_vocab_size == 0 {
            return Err(Error::invalid("vocabulary sizes must be positive"));
        }
        if self.signal.dealer_follow_ratio < 0.0 || self.signal.nondealer_follow_ratio < 0.0 {
            return Err(Error::invalid("follow ratios must be >= 0"));
        }
        Ok(())
    }
}

/// Standard normal draw via Box-Muller; keeps the generator free of
/// distribution crates whose stream could shift across versions.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct Vocab {
    background: Vec<String>,
    drug: Vec<String>,
}

impl Vocab {
    fn new(cfg: &SynthConfig) -> Self {
        Self {
            background: (0..cfg.background_vocab_size)
                .map(|i| format!("word{i}"))
                .collect(),
            drug: (0..cfg.drug_vocab_size).map(|i| format!("stash{i}")).collect(),
        }
    }

    fn background_word(&self, rng: &mut ChaCha8Rng) -> &str {
        &self.background[rng.gen_range(0..self.background.len())]
    }

    fn drug_word(&self, rng: &mut ChaCha8Rng) -> &str {
        &self.drug[rng.gen_range(0..self.drug.len())]
    }

    /// Drug posts mix signal words in; negatives stay almost clean.
    fn word(&self, rng: &mut ChaCha8Rng, drug_related: bool) -> String {
        let p_drug = if drug_related { 0.6 } else { 0.02 };
        if rng.gen_bool(p_drug) {
            self.drug_word(rng).to_string()
        } else {
            self.background_word(rng).to_string()
        }
    }
}

/// Sub-class centers sit near the drug center, offset along distinct axes.
fn embedding_center(cfg: &SynthConfig, label: Label) -> Vec<f64> {
    let d = cfg.embedding_dim;
    let mut center = vec![0.0; d];
    if label == Label::Negative {
        return center;
    }
    let base = cfg.cluster_separation / (d as f64).sqrt();
    for c in center.iter_mut() {
        *c = base;
    }
    let offset = 0.4 * cfg.cluster_separation;
    match label {
        Label::Weed => center[0] += offset,
        Label::Pills => center[1 % d] += offset,
        Label::Syrup => center[2 % d] += offset,
        _ => {}
    }
    center
}

fn sample_embedding(cfg: &SynthConfig, rng: &mut ChaCha8Rng, label: Label) -> Vec<f64> {
    let center = embedding_center(cfg, label);
    center.into_iter().map(|c| c + gauss(rng)).collect()
}

/// Instagram drug posts come from one of the three sub-kinds even though
/// their annotation is only binary.
fn sample_drug_subkind(rng: &mut ChaCha8Rng) -> Label {
    match rng.gen_range(0..3) {
        0 => Label::Weed,
        1 => Label::Pills,
        _ => Label::Syrup,
    }
}

fn sample_hour(rng: &mut ChaCha8Rng, midnight_biased: bool, bias: f64) -> u32 {
    if midnight_biased && rng.gen_bool(bias) {
        // H1 (midnight) and H4 (late night) windows.
        let late = [0, 1, 2, 3, 4, 5, 18, 19, 20, 21, 22, 23];
        late[rng.gen_range(0..late.len())]
    } else {
        rng.gen_range(0..24)
    }
}

fn sample_timestamp(rng: &mut ChaCha8Rng, hour: u32) -> DateTime<Utc> {
    let day = rng.gen_range(0..180i64);
    let minute = rng.gen_range(0..60u32);
    let second = rng.gen_range(0..60u32);
    let base = Utc.with_ymd_and_hms(2025, 1, 1, hour, minute, second).unwrap();
    base + chrono::Duration::days(day)
}

fn caption(vocab: &Vocab, rng: &mut ChaCha8Rng, drug_related: bool) -> String {
    let len = rng.gen_range(6..=12);
    (0..len)
        .map(|_| vocab.word(rng, drug_related))
        .collect::<Vec<_>>()
        .join(" ")
}

fn tags(vocab: &Vocab, rng: &mut ChaCha8Rng, drug_related: bool) -> Vec<String> {
    let len = rng.gen_range(2..=6);
    (0..len).map(|_| vocab.word(rng, drug_related)).collect()
}

/// Generates the full synthetic dataset: accounts with their timelines,
/// the flat post corpus (account posts plus web posts), and dual-expert
/// dealer labels.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = Vocab::new(cfg);

    // floor(f*n + 0.5): always floor(f*n) or ceil(f*n).
    let n_dealers = (cfg.dealer_fraction * cfg.n_accounts as f64).round() as usize;

    let mut accounts = Vec::with_capacity(cfg.n_accounts);
    let mut posts = Vec::new();
    let mut post_seq = 0usize;

    for acct_idx in 0..cfg.n_accounts {
        let is_dealer = acct_idx < n_dealers;
        let id = format!("acct{acct_idx:04}");

        let followers: u64 = if is_dealer {
            rng.gen_range(400..4000)
        } else {
            rng.gen_range(50..1500)
        };
        let ratio = if is_dealer {
            cfg.signal.dealer_follow_ratio
        } else {
            cfg.signal.nondealer_follow_ratio
        };
        let jitter = rng.gen_range(0.6..1.4);
        let following = (followers as f64 * ratio * jitter).round().max(0.0) as u64;

        let drug_rate = if is_dealer {
            cfg.signal.dealer_drug_rate
        } else {
            cfg.signal.nondealer_drug_rate
        };

        let n_posts = rng.gen_range(cfg.posts_per_account_min..=cfg.posts_per_account_max);
        let mut acct_posts = Vec::with_capacity(n_posts);
        let mut comments_per_post: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for _ in 0..n_posts {
            let drug_related = rng.gen_bool(drug_rate);
            let post_id = format!("p{post_seq:06}");
            post_seq += 1;
            let hour = sample_hour(
                &mut rng,
                is_dealer && drug_related,
                cfg.signal.midnight_bias,
            );
            let subkind = if drug_related {
                sample_drug_subkind(&mut rng)
            } else {
                Label::Negative
            };
            let post = Post {
                id: post_id.clone(),
                account_id: Some(id.clone()),
                timestamp: sample_timestamp(&mut rng, hour),
                tags: tags(&vocab, &mut rng, drug_related),
                caption: caption(&vocab, &mut rng, drug_related),
                embedding: sample_embedding(cfg, &mut rng, subkind),
                label: Some(if drug_related { Label::Drug } else { Label::Negative }),
                source: Source::Instagram,
            };
            let n_comments = rng.gen_range(0..=3);
            let comments: Vec<String> = (0..n_comments)
                .map(|_| caption(&vocab, &mut rng, false))
                .collect();
            if !comments.is_empty() {
                comments_per_post.insert(post_id, comments);
            }
            acct_posts.push(post);
        }

        let blacklist_prob = if is_dealer {
            cfg.signal.dealer_blacklist_prob
        } else {
            cfg.signal.nondealer_blacklist_prob
        };
        let mut bio = caption(&vocab, &mut rng, false);
        if rng.gen_bool(blacklist_prob) {
            let phrase = TRANSACTION_PHRASES[rng.gen_range(0..TRANSACTION_PHRASES.len())];
            let drug_post_ids: Vec<&str> = acct_posts
                .iter()
                .filter(|p| p.label == Some(Label::Drug))
                .map(|p| p.id.as_str())
                .collect();
            // Half the time the phrase lands in a drug-post comment rather
            // than the bio, when such a post exists.
            if !drug_post_ids.is_empty() && rng.gen_bool(0.5) {
                let target = drug_post_ids[rng.gen_range(0..drug_post_ids.len())].to_string();
                comments_per_post.entry(target).or_default().push(phrase.to_string());
            } else {
                bio.push(' ');
                bio.push_str(phrase);
            }
        }

        let truth = is_dealer;
        let exp2 = if rng.gen_bool(cfg.expert_disagreement) {
            !truth
        } else {
            truth
        };
        let mut dealer_labels = BTreeMap::new();
        dealer_labels.insert(EXPERT_IDS[0].to_string(), truth);
        dealer_labels.insert(EXPERT_IDS[1].to_string(), exp2);

        posts.extend(acct_posts.iter().cloned());
        accounts.push(Account {
            id,
            followers,
            following,
            bio,
            posts: acct_posts,
            comments_per_post,
            dealer_labels,
        });
    }

    // Web-sourced sub-class posts: embedding only, no account, no text.
    for label in [Label::Weed, Label::Pills, Label::Syrup] {
        for _ in 0..cfg.web_posts_per_class {
            let post_id = format!("p{post_seq:06}");
            post_seq += 1;
            let hour = rng.gen_range(0..24);
            posts.push(Post {
                id: post_id,
                account_id: None,
                timestamp: sample_timestamp(&mut rng, hour),
                tags: Vec::new(),
                caption: String::new(),
                embedding: sample_embedding(cfg, &mut rng, label),
                label: Some(label),
                source: Source::Web,
            });
        }
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("generator".to_string(), "synth".to_string());
    metadata.insert("seed".to_string(), cfg.seed.to_string());

    let dataset = Dataset {
        posts,
        accounts,
        embedding_dim: cfg.embedding_dim,
        metadata,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// The generator's transaction phrases, one per line, as blacklist file
/// content.
pub fn blacklist_file_content() -> String {
    let mut s = String::from("# transaction phrases planted by the synthetic generator\n");
    for phrase in TRANSACTION_PHRASES {
        s.push_str(phrase);
        s.push('\n');
    }
    s
}
