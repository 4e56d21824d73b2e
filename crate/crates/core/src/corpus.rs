//! Data model and JSONL ingestion for posts and accounts, plus stratified
//! fold splitting.
//!
//! The interchange format is JSONL: one JSON object per line, so parse
//! errors carry a line number and files stream/diff cleanly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Embedding dimension assumed when a corpus does not declare one
/// (the pooled feature size of the upstream CNN encoder).
pub const DEFAULT_EMBEDDING_DIM: usize = 1024;

/// Cap on posts kept per account.
pub const DEFAULT_POSTS_PER_ACCOUNT_CAP: usize = 200;

/// Post label. Instagram posts are annotated binary (`negative`/`drug`);
/// web-sourced posts carry one of the three sub-class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Drug,
    Weed,
    Pills,
    Syrup,
}

impl Label {
    /// True for `drug` and the three sub-classes.
    pub fn is_drug_related(self) -> bool {
        !matches!(self, Label::Negative)
    }

    /// True for the web-only sub-class labels.
    pub fn is_subclass(self) -> bool {
        matches!(self, Label::Weed | Label::Pills | Label::Syrup)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::Negative => "negative",
            Label::Drug => "drug",
            Label::Weed => "weed",
            Label::Pills => "pills",
            Label::Syrup => "syrup",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Instagram,
    Web,
}

/// UTC timestamps at second precision, serialized as `YYYY-MM-DDThh:mm:ssZ`.
pub mod timestamp {
    use super::*;

    pub const FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

    pub fn parse(s: &str) -> std::result::Result<DateTime<Utc>, String> {
        NaiveDateTime::parse_from_str(s, FORMAT)
            .map(|naive| naive.and_utc())
            .map_err(|e| format!("invalid timestamp `{s}`: {e}"))
    }

    pub fn format(ts: &DateTime<Utc>) -> String {
        ts.format(FORMAT).to_string()
    }

    pub fn serialize<S>(ts: &DateTime<Utc>, ser: S) -> std::result::Result<S::Ok, S::Error>
    where
        S: serde::Serializer,
    {
        ser.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D>(de: D) -> std::result::Result<DateTime<Utc>, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let s = String::deserialize(de)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One social-media post. The image itself never enters the pipeline;
/// `embedding` is its precomputed visual feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    /// Absent for web-sourced posts (search-engine images have no account).
    pub account_id: Option<String>,
    #[serde(with = "timestamp")]
    pub timestamp: DateTime<Utc>,
    pub tags: Vec<String>,
    pub caption: String,
    pub embedding: Vec<f64>,
    pub label: Option<Label>,
    pub source: Source,
}

impl Post {
    /// Checks the per-post invariants that do not need corpus context.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if let Some(label) = self.label {
            if label.is_subclass() && self.source != Source::Web {
                return Err(format!(
                    "label {label} requires source=web, got source=instagram"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Account {
    pub id: String,
    pub followers: u64,
    pub following: u64,
    pub bio: String,
    pub posts: Vec<Post>,
    /// post id -> comments left on that post.
    #[serde(rename = "comments", default)]
    pub comments_per_post: BTreeMap<String, Vec<String>>,
    /// expert id -> dealer verdict. Empty when unannotated.
    #[serde(default)]
    pub dealer_labels: BTreeMap<String, bool>,
}

impl Account {
    pub fn comments_for(&self, post_id: &str) -> &[String] {
        self.comments_per_post
            .get(post_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// A validated corpus: posts and/or accounts plus the embedding dimension
/// they share. Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub posts: Vec<Post>,
    pub accounts: Vec<Account>,
    pub embedding_dim: usize,
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    /// All posts reachable through the dataset: standalone posts plus
    /// every account's timeline.
    pub fn all_posts(&self) -> impl Iterator<Item = &Post> {
        self.posts
            .iter()
            .chain(self.accounts.iter().flat_map(|a| a.posts.iter()))
    }

    /// Checks that every post's `account_id` resolves when accounts are
    /// present, and that embedding dimensions are consistent.
    pub fn validate(&self) -> Result<()> {
        for post in self.all_posts() {
            if post.embedding.len() != self.embedding_dim {
                return Err(Error::data(format!(
                    "post {}: embedding dim {} \u{2260} {}",
                    post.id,
                    post.embedding.len(),
                    self.embedding_dim
                )));
            }
        }
        if !self.accounts.is_empty() {
            for post in &self.posts {
                if let Some(acct) = &post.account_id {
                    if !self.accounts.iter().any(|a| &a.id == acct) {
                        return Err(Error::data(format!(
                            "post {}: account_id {acct} does not resolve",
                            post.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Posts,
    Accounts,
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posts" => Ok(Schema::Posts),
            "accounts" => Ok(Schema::Accounts),
            other => Err(Error::invalid(format!("unknown schema `{other}`"))),
        }
    }
}

/// Loads a JSONL file under the given schema, validating every record.
/// The corpus embedding dimension is declared by the first record;
/// every later record must agree.
pub fn load_dataset(path: &Path, schema: Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    match schema {
        Schema::Posts => load_posts_from(reader),
        Schema::Accounts => load_accounts_from(reader),
    }
}

fn load_posts_from<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut posts = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let post: Post = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        post.validate().map_err(|msg| Error::Parse {
            line: lineno,
            msg: format!("post {}: {msg}", post.id),
        })?;
        let expected = *dim.get_or_insert(post.embedding.len());
        if post.embedding.len() != expected {
            return Err(Error::EmbeddingDim {
                post_id: post.id,
                line: lineno,
                got: post.embedding.len(),
                expected,
            });
        }
        posts.push(post);
    }
    Ok(Dataset {
        posts,
        accounts: Vec::new(),
        embedding_dim: dim.unwrap_or(DEFAULT_EMBEDDING_DIM),
        metadata: BTreeMap::new(),
    })
}

fn load_accounts_from<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut accounts = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let account: Account = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if account.posts.len() > DEFAULT_POSTS_PER_ACCOUNT_CAP {
            return Err(Error::Parse {
                line: lineno,
                msg: format!(
                    "account {}: {} posts exceeds cap {}",
                    account.id,
                    account.posts.len(),
                    DEFAULT_POSTS_PER_ACCOUNT_CAP
                ),
            });
        }
        for post in &account.posts {
            post.validate().map_err(|msg| Error::Parse {
                line: lineno,
                msg: format!("post {}: {msg}", post.id),
            })?;
            let expected = *dim.get_or_insert(post.embedding.len());
            if post.embedding.len() != expected {
                return Err(Error::EmbeddingDim {
                    post_id: post.id.clone(),
                    line: lineno,
                    got: post.embedding.len(),
                    expected,
                });
            }
        }
        accounts.push(account);
    }
    Ok(Dataset {
        posts: Vec::new(),
        accounts,
        embedding_dim: dim.unwrap_or(DEFAULT_EMBEDDING_DIM),
        metadata: BTreeMap::new(),
    })
}

/// Serializes posts as JSONL, one object per line, in input order.
pub fn write_posts_jsonl<W: Write>(writer: &mut W, posts: &[Post]) -> Result<()> {
    for post in posts {
        serde_json::to_writer(&mut *writer, post)
            .map_err(|e| Error::invalid(format!("serialize post {}: {e}", post.id)))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_accounts_jsonl<W: Write>(writer: &mut W, accounts: &[Account]) -> Result<()> {
    for account in accounts {
        serde_json::to_writer(&mut *writer, account)
            .map_err(|e| Error::invalid(format!("serialize account {}: {e}", account.id)))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn posts_to_jsonl(posts: &[Post]) -> Result<String> {
    let mut buf = Vec::new();
    write_posts_jsonl(&mut buf, posts)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

pub fn accounts_to_jsonl(accounts: &[Account]) -> Result<String> {
    let mut buf = Vec::new();
    write_accounts_jsonl(&mut buf, accounts)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

/// Stratified k-fold split. Positives and negatives are shuffled
/// separately (seeded) and dealt round-robin, so per-fold positive counts
/// differ by at most one and fold sizes differ by at most one.
///
/// Returns `k` disjoint index sets that partition `0..labels.len()`.
pub fn split_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be >= 2, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds number of samples {}",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut folds = vec![Vec::new(); k];
    // Deal positives first, then continue the round-robin with negatives so
    // fold sizes stay balanced.
    for (i, idx) in positives.iter().chain(negatives.iter()).enumerate() {
        folds[i % k].push(*idx);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Train/test views for one fold: `test` is the fold itself, `train` is
/// everything else.
pub fn fold_partition(folds: &[Vec<usize>], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let test = folds[fold].clone();
    let mut train: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fold)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    train.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post_line(id: &str, dim: usize) -> String {
        let embedding: Vec<f64> = (0..dim).map(|i| i as f64 * 0.5).collect();
        let post = Post {
            id: id.to_string(),
            account_id: Some("a1".to_string()),
            timestamp: timestamp::parse("2025-03-01T12:00:00Z").unwrap(),
            tags: vec!["weed".to_string()],
            caption: "hello".to_string(),
            embedding,
            label: Some(Label::Drug),
            source: Source::Instagram,
        };
        serde_json::to_string(&post).unwrap()
    }

    #[test]
    fn loads_three_valid_posts() {
        let input = format!("{}\n{}\n{}\n", post_line("p1", 4), post_line("p2", 4), post_line("p3", 4));
        let ds = load_posts_from(input.as_bytes()).unwrap();
        assert_eq!(ds.posts.len(), 3);
        assert_eq!(ds.embedding_dim, 4);
    }

    #[test]
    fn embedding_dim_mismatch_names_post_and_line() {
        let input = format!("{}\n{}\n", post_line("p1", 4), post_line("p2", 3));
        let err = load_posts_from(input.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "post p2, line 2: embedding dim 3 \u{2260} 4");
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let ds = load_posts_from("".as_bytes()).unwrap();
        assert!(ds.posts.is_empty());
        assert_eq!(ds.embedding_dim, DEFAULT_EMBEDDING_DIM);
    }

    #[test]
    fn malformed_json_names_line() {
        let input = format!("{}\nnot json\n", post_line("p1", 4));
        let err = load_posts_from(input.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
    }

    #[test]
    fn unknown_label_rejected() {
        let good = post_line("p1", 2);
        let bad = good.replace("\"drug\"", "\"cocaine\"");
        let err = load_posts_from(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn subclass_label_requires_web_source() {
        let line = post_line("p1", 2).replace("\"drug\"", "\"weed\"");
        let err = load_posts_from(line.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("requires source=web"), "{err}");
    }

    #[test]
    fn jsonl_round_trip_preserves_posts() {
        let input = format!("{}\n{}\n", post_line("p1", 4), post_line("p2", 4));
        let ds = load_posts_from(input.as_bytes()).unwrap();
        let out = posts_to_jsonl(&ds.posts).unwrap();
        let ds2 = load_posts_from(out.as_bytes()).unwrap();
        assert_eq!(ds.posts, ds2.posts);
    }

    #[test]
    fn timestamp_format_is_strict() {
        assert!(timestamp::parse("2025-03-01T12:00:00Z").is_ok());
        assert!(timestamp::parse("2025-03-01 12:00:00").is_err());
        assert!(timestamp::parse("2025-13-01T12:00:00Z").is_err());
    }

    #[test]
    fn split_folds_stratifies_ten_samples() {
        let labels: Vec<bool> = vec![
            true, false, false, true, false, false, true, false, false, false,
        ];
        let folds = split_folds(&labels, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        for fold in &folds {
            assert_eq!(fold.len(), 2);
            let pos = fold.iter().filter(|&&i| labels[i]).count();
            assert!(pos <= 1, "fold has {pos} positives");
        }
    }

    #[test]
    fn split_folds_deterministic() {
        let labels: Vec<bool> = (0..37).map(|i| i % 5 == 0).collect();
        let a = split_folds(&labels, 5, 99).unwrap();
        let b = split_folds(&labels, 5, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_folds_rejects_k_above_n() {
        let labels = vec![true, false, true, false];
        assert!(split_folds(&labels, 5, 0).is_err());
        assert!(split_folds(&labels, 1, 0).is_err());
    }

    #[test]
    fn split_folds_is_partition() {
        for seed in 0..20u64 {
            let n = 23 + (seed as usize % 11);
            let labels: Vec<bool> = (0..n).map(|i| (i * 7 + seed as usize).is_multiple_of(3)).collect();
            let folds = split_folds(&labels, 4, seed).unwrap();
            let mut seen = vec![false; n];
            for fold in &folds {
                for &i in fold {
                    assert!(!seen[i], "index {i} appears twice");
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s), "indices missing from partition");
        }
    }

    #[test]
    fn fold_partition_is_complement() {
        let labels: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let folds = split_folds(&labels, 5, 7).unwrap();
        let (train, test) = fold_partition(&folds, 2);
        assert_eq!(train.len() + test.len(), 10);
        for i in &test {
            assert!(!train.contains(i));
        }
    }

    #[test]
    fn accounts_jsonl_round_trips() {
        let post: Post = serde_json::from_str(&post_line("p1", 3)).unwrap();
        let account = Account {
            id: "a1".to_string(),
            followers: 120,
            following: 37,
            bio: "caf\u{e9} \u{1f525} bio".to_string(),
            posts: vec![post],
            comments_per_post: [("p1".to_string(), vec!["nice".to_string()])].into(),
            dealer_labels: [("exp1".to_string(), true), ("exp2".to_string(), false)].into(),
        };
        let jsonl = accounts_to_jsonl(std::slice::from_ref(&account)).unwrap();
        let ds = load_accounts_from(jsonl.as_bytes()).unwrap();
        assert_eq!(ds.accounts, vec![account]);
        assert_eq!(ds.embedding_dim, 3);
        // Serializing the loaded dataset reproduces the file.
        assert_eq!(accounts_to_jsonl(&ds.accounts).unwrap(), jsonl);
    }

    #[test]
    fn dataset_validate_catches_unresolved_account_id() {
        let line = post_line("p1", 2);
        let ds = load_posts_from(line.as_bytes()).unwrap();
        let mut with_accounts = ds.clone();
        with_accounts.accounts.push(Account {
            id: "someone_else".to_string(),
            followers: 0,
            following: 0,
            bio: String::new(),
            posts: vec![],
            comments_per_post: BTreeMap::new(),
            dealer_labels: BTreeMap::new(),
        });
        // Standalone posts are fine; with accounts present the reference
        // must resolve.
        assert!(ds.validate().is_ok());
        let err = with_accounts.validate().unwrap_err();
        assert!(err.to_string().contains("does not resolve"), "{err}");
    }
}
