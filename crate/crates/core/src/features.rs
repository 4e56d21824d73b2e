//! Account-level behavior features: drug-post percentage, hour-of-day
//! bins, follower relations, and the transaction-evidence flag, plus the
//! zero-mean/unit-variance normalizer applied before dealer training.

use std::collections::HashMap;

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Account;
use crate::error::{Error, Result};

/// Fixed feature order of the 9-dimensional account vector.
pub const FEATURE_NAMES: [&str; 9] = ["P", "H1", "H2", "H3", "H4", "R1", "R2", "R3", "E"];

pub const FEATURE_DIM: usize = 9;

/// The assembled per-account feature vector, in the order
/// [P, H1, H2, H3, H4, R1, R2, R3, E].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountFeatureVector {
    /// Fraction of the account's posts classified drug-related.
    pub p: f64,
    /// Fractions of drug-related posts falling in each 6-hour UTC window:
    /// H1 = [00,06) "midnight", H2 = [06,12), H3 = [12,18),
    /// H4 = [18,24) "late night". All zero when there are no drug posts.
    pub h: [f64; 4],
    /// Follower count.
    pub r1: f64,
    /// Following count.
    pub r2: f64,
    /// following / max(followers, 1).
    pub r3: f64,
    /// Transaction evidence flag (0 or 1).
    pub e: f64,
}

impl AccountFeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.p, self.h[0], self.h[1], self.h[2], self.h[3], self.r1, self.r2, self.r3,
            self.e,
        ]
    }
}

/// (# drug-related posts) / (# all posts); 0 for an empty timeline.
/// Every post must have a prediction.
pub fn drug_post_percentage(
    account: &Account,
    decisions: &HashMap<String, bool>,
) -> Result<f64> {
    if account.posts.is_empty() {
        return Ok(0.0);
    }
    let mut drug = 0usize;
    for post in &account.posts {
        match decisions.get(&post.id) {
            Some(true) => drug += 1,
            Some(false) => {}
            None => {
                return Err(Error::data(format!(
                    "no prediction for post {} of account {}",
                    post.id, account.id
                )))
            }
        }
    }
    Ok(drug as f64 / account.posts.len() as f64)
}

/// Fraction of drug-related posts per 6-hour UTC bin; all zero for an
/// empty input.
pub fn hour_bins(drug_post_times: &[DateTime<Utc>]) -> [f64; 4] {
    if drug_post_times.is_empty() {
        return [0.0; 4];
    }
    let mut counts = [0usize; 4];
    for ts in drug_post_times {
        counts[(ts.hour() / 6) as usize] += 1;
    }
    let n = drug_post_times.len() as f64;
    counts.map(|c| c as f64 / n)
}

/// (followers, following, following/max(followers,1)).
pub fn relational_features(account: &Account) -> (f64, f64, f64) {
    let r1 = account.followers as f64;
    let r2 = account.following as f64;
    let r3 = r2 / (account.followers.max(1)) as f64;
    (r1, r2, r3)
}

/// Transaction phrase list; phrases are stored lowercase and matched as
/// case-insensitive substrings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blacklist {
    pub phrases: Vec<String>,
}

impl Blacklist {
    pub fn new(phrases: Vec<String>) -> Result<Self> {
        let phrases: Vec<String> = phrases
            .into_iter()
            .map(|p| p.trim().to_lowercase())
            .filter(|p| !p.is_empty())
            .collect();
        if phrases.is_empty() {
            return Err(Error::invalid("blacklist must contain at least one phrase"));
        }
        Ok(Self { phrases })
    }

    /// Parses the plain-text format: one phrase per line, `#`-prefixed
    /// comment lines and blank lines ignored.
    pub fn parse(content: &str) -> Result<Self> {
        let phrases = content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Self::new(phrases)
    }

    fn hits(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.phrases.iter().any(|p| lower.contains(p.as_str()))
    }
}

/// True iff any blacklist phrase occurs in the account bio or in a
/// comment attached to one of its drug-related posts. Comments on
/// non-drug posts are not scanned.
pub fn transaction_evidence(
    account: &Account,
    drug_post_ids: &[&str],
    blacklist: &Blacklist,
) -> bool {
    if blacklist.hits(&account.bio) {
        return true;
    }
    drug_post_ids
        .iter()
        .flat_map(|id| account.comments_for(id))
        .any(|comment| blacklist.hits(comment))
}

/// Builds the full 9-dimensional feature vector for one account from the
/// per-post drug decisions.
pub fn assemble(
    account: &Account,
    decisions: &HashMap<String, bool>,
    blacklist: &Blacklist,
) -> Result<AccountFeatureVector> {
    let p = drug_post_percentage(account, decisions)?;
    let drug_posts: Vec<&crate::corpus::Post> = account
        .posts
        .iter()
        .filter(|post| decisions.get(&post.id) == Some(&true))
        .collect();
    let times: Vec<DateTime<Utc>> = drug_posts.iter().map(|p| p.timestamp).collect();
    let h = hour_bins(&times);
    let (r1, r2, r3) = relational_features(account);
    let drug_ids: Vec<&str> = drug_posts.iter().map(|p| p.id.as_str()).collect();
    let e = if transaction_evidence(account, &drug_ids, blacklist) {
        1.0
    } else {
        0.0
    };
    Ok(AccountFeatureVector {
        p,
        h,
        r1,
        r2,
        r3,
        e,
    })
}

/// Per-dimension zero-mean/unit-variance scaling, fitted with the
/// population standard deviation. Zero-variance dimensions store std 1 so
/// they pass through centered.
///
/// Applying a fitted normalizer twice is not the same as applying it
/// once; callers normalize raw feature vectors exactly one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(vectors: &[Vec<f64>]) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(Error::data(format!(
                "normalizer needs at least 2 vectors, got {}",
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::data("inconsistent feature dimensions"));
        }
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
                let d = x - m;
                *s += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, vector: &[f64]) -> Result<Vec<f64>> {
        if vector.len() != self.mean.len() {
            return Err(Error::data(format!(
                "vector dim {} \u{2260} normalizer dim {}",
                vector.len(),
                self.mean.len()
            )));
        }
        Ok(vector
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn apply_all(&self, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        vectors.iter().map(|v| self.apply(v)).collect()
    }
}

/// Writes the feature dump CSV with the fixed header
/// `account_id,P,H1,H2,H3,H4,R1,R2,R3,E`.
pub fn write_features_csv(
    rows: &[(String, AccountFeatureVector)],
) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["account_id"];
    header.extend_from_slice(&FEATURE_NAMES);
    writer
        .write_record(&header)
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    for (id, features) in rows {
        let mut record = vec![id.clone()];
        record.extend(features.to_vec().iter().map(|v| format_feature(*v)));
        writer
            .write_record(&record)
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn format_feature(v: f64) -> String {
    // Counts and the flag stay integral in the dump.
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Reads a feature dump back into (account_id, vector) rows.
pub fn read_features_csv(content: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::Reader::from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("csv: {e}")))?
        .clone();
    let mut expected = vec!["account_id".to_string()];
    expected.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    let got: Vec<String> = headers.iter().map(str::to_string).collect();
    if got != expected {
        return Err(Error::data(format!(
            "unexpected features header: {}",
            got.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        let id = record[0].to_string();
        let values: std::result::Result<Vec<f64>, _> =
            (1..record.len()).map(|j| record[j].parse::<f64>()).collect();
        let values = values.map_err(|e| Error::Parse {
            line: i + 2,
            msg: format!("account {id}: {e}"),
        })?;
        if values.len() != FEATURE_DIM {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("account {id}: expected {FEATURE_DIM} features"),
            });
        }
        rows.push((id, values));
    }
    Ok(rows)
}
