//! Metrics, the stratified cross-validation drivers for posts and
//! accounts, and the two-expert agreement/cross-evaluation protocol.
//!
//! Every trainable component (vocabularies, idf, naive Bayes, MLP,
//! normalizer, logistic regression) is fitted on each fold's training
//! split only; the held-out split is touched exclusively at predict time.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{fold_partition, split_folds, Account, Dataset, Label, Post, Source};
use crate::dealer::{self, FitResult, L1Config, LogRegModel};
use crate::error::{Error, Result};
use crate::features::{assemble, Blacklist, Normalizer};
use crate::fusion::{classify_posts, FusionConfig, PostPrediction};
use crate::multitask::{samples_from_posts, train, MlpModel, TaskTree, TrainConfig};
use crate::text::{FieldSelection, TextClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the truth labels are single-class.
    pub auc: Option<f64>,
    pub confusion: Confusion,
}

/// Confusion-matrix metrics from the hard decisions; AUC from the scores
/// via the exact rank formulation (ties get half credit), equivalent to
/// P(score_pos > score_neg) + P(tie)/2 over all positive-negative pairs.
pub fn compute_metrics(decisions: &[bool], scores: &[f64], truth: &[bool]) -> Result<Metrics> {
    if decisions.len() != truth.len() || scores.len() != truth.len() {
        return Err(Error::data(format!(
            "length mismatch: {} decisions, {} scores, {} truth labels",
            decisions.len(),
            scores.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::data("cannot compute metrics on empty input"));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&d, &t) in decisions.iter().zip(truth) {
        match (d, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let n = truth.len() as f64;
    let accuracy = (c.tp + c.tn) as f64 / n;
    let precision = if c.tp + c.fp > 0 {
        c.tp as f64 / (c.tp + c.fp) as f64
    } else {
        0.0
    };
    let recall = if c.tp + c.fn_ > 0 {
        c.tp as f64 / (c.tp + c.fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        auc: auc_rank(scores, truth),
        confusion: c,
    })
}

/// Rank-based AUC; `None` when one class is missing.
fn auc_rank(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores are not NaN"));

    // Average ranks over tied scores, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if truth[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Fraction of positions where the two label lists agree.
pub fn agreement_rate(labels_a: &[bool], labels_b: &[bool]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::data(format!(
            "label lists differ in length: {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::data("cannot compute agreement of empty label lists"));
    }
    let equal = labels_a
        .iter()
        .zip(labels_b)
        .filter(|(a, b)| a == b)
        .count();
    Ok(equal as f64 / labels_a.len() as f64)
}

/// Scores one set of predictions against each expert's labels separately.
/// Every account must be labeled by every expert.
pub fn cross_expert_eval(
    account_ids: &[String],
    decisions: &[bool],
    scores: &[f64],
    labels_by_expert: &BTreeMap<String, BTreeMap<String, bool>>,
) -> Result<Vec<(String, Metrics)>> {
    let mut rows = Vec::new();
    for (expert, labels) in labels_by_expert {
        let truth: Result<Vec<bool>> = account_ids
            .iter()
            .map(|id| {
                labels.get(id).copied().ok_or_else(|| {
                    Error::data(format!("expert {expert} has no label for account {id}"))
                })
            })
            .collect();
        let metrics = compute_metrics(decisions, scores, &truth?)?;
        rows.push((expert.clone(), metrics));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Fitted pipeline components
// ---------------------------------------------------------------------------

/// The deployed post classifier: multitask MLP + combined-text naive
/// Bayes, fused at decision level.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedClassifier {
    pub mlp: MlpModel,
    pub text: TextClassifier,
    pub fusion: FusionConfig,
}

impl FusedClassifier {
    pub fn classify(&self, posts: &[&Post]) -> Result<Vec<PostPrediction>> {
        classify_posts(posts, &self.mlp, &self.text, &self.fusion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostPipelineConfig {
    pub mlp: TrainConfig,
    /// Laplace smoothing for the naive Bayes.
    pub alpha: f64,
    pub vocab_cap: usize,
    pub fusion: FusionConfig,
}

impl Default for PostPipelineConfig {
    fn default() -> Self {
        Self {
            mlp: TrainConfig::default(),
            alpha: 1.0,
            vocab_cap: crate::text::DEFAULT_VOCAB_CAP,
            fusion: FusionConfig::default(),
        }
    }
}

fn binary_instagram<'a>(posts: &[&'a Post]) -> Vec<&'a Post> {
    posts
        .iter()
        .copied()
        .filter(|p| {
            p.source == Source::Instagram
                && matches!(p.label, Some(Label::Drug) | Some(Label::Negative))
        })
        .collect()
}

fn web_subclass<'a>(posts: &[&'a Post]) -> Vec<&'a Post> {
    posts
        .iter()
        .copied()
        .filter(|p| p.source == Source::Web && p.label.is_some_and(|l| l.is_subclass()))
        .collect()
}

/// Fits the deployed fused classifier (multitask MLP + combined text) on
/// the given training posts. `posts` may mix labeled Instagram posts and
/// web sub-class posts; each component takes what it can use.
pub fn fit_fused_classifier(posts: &[&Post], cfg: &PostPipelineConfig) -> Result<FusedClassifier> {
    let instagram = binary_instagram(posts);
    let web = web_subclass(posts);
    let tree = TaskTree::default();
    let mut samples = samples_from_posts(&instagram, &tree, cfg.mlp.relation_weight, false);
    samples.extend(samples_from_posts(&web, &tree, cfg.mlp.relation_weight, false));
    let run = train(&samples, &cfg.mlp)?;
    let text = TextClassifier::fit(&instagram, FieldSelection::Combined, cfg.vocab_cap, cfg.alpha)?;
    Ok(FusedClassifier {
        mlp: run.model,
        text,
        fusion: cfg.fusion,
    })
}

/// Every classifier variant scored in the post-recognition report.
#[derive(Debug, Clone, PartialEq)]
pub struct PostModels {
    /// Single-task baseline: drug head only, Instagram data only.
    pub st_mlp: MlpModel,
    /// Multitask model trained with web sub-class posts.
    pub mt_mlp: MlpModel,
    pub text_tags: TextClassifier,
    pub text_caption: TextClassifier,
    pub text_combined: TextClassifier,
}

pub const POST_METHODS: [&str; 6] = [
    "mlp",
    "mt_mlp",
    "tags_only",
    "caption_only",
    "combined",
    "late_fusion",
];

/// Fits all six method variants on the training posts.
pub fn fit_post_models(posts: &[&Post], cfg: &PostPipelineConfig) -> Result<PostModels> {
    let instagram = binary_instagram(posts);
    let web = web_subclass(posts);
    let tree = TaskTree::default();

    let st_samples = samples_from_posts(&instagram, &tree, cfg.mlp.relation_weight, true);
    let st_mlp = train(&st_samples, &cfg.mlp)?.model;

    let mut mt_samples = samples_from_posts(&instagram, &tree, cfg.mlp.relation_weight, false);
    mt_samples.extend(samples_from_posts(&web, &tree, cfg.mlp.relation_weight, false));
    let mt_mlp = train(&mt_samples, &cfg.mlp)?.model;

    let text_tags =
        TextClassifier::fit(&instagram, FieldSelection::TagsOnly, cfg.vocab_cap, cfg.alpha)?;
    let text_caption =
        TextClassifier::fit(&instagram, FieldSelection::CaptionOnly, cfg.vocab_cap, cfg.alpha)?;
    let text_combined =
        TextClassifier::fit(&instagram, FieldSelection::Combined, cfg.vocab_cap, cfg.alpha)?;

    Ok(PostModels {
        st_mlp,
        mt_mlp,
        text_tags,
        text_caption,
        text_combined,
    })
}

impl PostModels {
    /// Probability that `post` is drug-related under the named method.
    pub fn predict(&self, method: &str, post: &Post, fusion: &FusionConfig) -> Result<f64> {
        match method {
            "mlp" => self.st_mlp.predict_drug_prob(&post.embedding),
            "mt_mlp" => self.mt_mlp.predict_drug_prob(&post.embedding),
            "tags_only" => self.text_tags.predict_proba(post),
            "caption_only" => self.text_caption.predict_proba(post),
            "combined" => self.text_combined.predict_proba(post),
            "late_fusion" => {
                let p_image = self.mt_mlp.predict_drug_prob(&post.embedding)?;
                let p_text = self.text_combined.predict_proba(post)?;
                let (p, _) = crate::fusion::fuse(p_image, p_text, fusion)?;
                Ok(p)
            }
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Cross-validation reports
// ---------------------------------------------------------------------------

/// One report line: a method (optionally per expert), on one fold or the
/// cross-fold mean (`fold: None`). The mean row averages the metric
/// values and sums the confusion counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub method: String,
    pub expert: Option<String>,
    pub fold: Option<usize>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CvReport {
    pub rows: Vec<CvRow>,
}

impl CvReport {
    pub fn mean_row(&self, method: &str, expert: Option<&str>) -> Option<&CvRow> {
        self.rows.iter().find(|r| {
            r.method == method && r.fold.is_none() && r.expert.as_deref() == expert
        })
    }

    /// CSV with one row per method/fold plus a mean row per method
    /// (columns: method, expert, fold, accuracy, precision, recall, f1,
    /// auc).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,expert,fold,accuracy,precision,recall,f1,auc\n");
        for row in &self.rows {
            let fold = row
                .fold
                .map(|f| (f + 1).to_string())
                .unwrap_or_else(|| "mean".to_string());
            let auc = row
                .metrics
                .auc
                .map(|a| format!("{a:.6}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                row.method,
                row.expert.as_deref().unwrap_or(""),
                fold,
                row.metrics.accuracy,
                row.metrics.precision,
                row.metrics.recall,
                row.metrics.f1,
                auc
            ));
        }
        out
    }
}

fn mean_metrics(per_fold: &[Metrics]) -> Metrics {
    let n = per_fold.len() as f64;
    let aucs: Vec<f64> = per_fold.iter().filter_map(|m| m.auc).collect();
    Metrics {
        accuracy: per_fold.iter().map(|m| m.accuracy).sum::<f64>() / n,
        precision: per_fold.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: per_fold.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: per_fold.iter().map(|m| m.f1).sum::<f64>() / n,
        auc: if aucs.is_empty() {
            None
        } else {
            Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
        },
        confusion: per_fold.iter().fold(
            Confusion {
                tp: 0,
                fp: 0,
                tn: 0,
                fn_: 0,
            },
            |acc, m| Confusion {
                tp: acc.tp + m.confusion.tp,
                fp: acc.fp + m.confusion.fp,
                tn: acc.tn + m.confusion.tn,
                fn_: acc.fn_ + m.confusion.fn_,
            },
        ),
    }
}

#[derive(Debug, Clone)]
pub struct PostCvOutcome {
    pub report: CvReport,
    /// The components fitted per fold, exposed so tests can verify that
    /// nothing fitted depends on held-out records.
    pub fold_models: Vec<PostModels>,
}

/// Stratified k-fold cross-validation of post recognition over the
/// labeled Instagram posts. Web sub-class posts are auxiliary training
/// data in every fold and are never evaluated.
pub fn cross_validate_posts(
    dataset: &Dataset,
    cfg: &PostPipelineConfig,
    k: usize,
    seed: u64,
) -> Result<PostCvOutcome> {
    let all: Vec<&Post> = dataset.posts.iter().collect();
    let instagram = binary_instagram(&all);
    let web = web_subclass(&all);
    if instagram.is_empty() {
        return Err(Error::data("no labeled instagram posts to cross-validate"));
    }
    let labels: Vec<bool> = instagram.iter().map(|p| p.label == Some(Label::Drug)).collect();
    let folds = split_folds(&labels, k, seed)?;

    let mut per_method: BTreeMap<&str, Vec<Metrics>> = BTreeMap::new();
    let mut fold_models = Vec::with_capacity(k);
    let mut rows = Vec::new();

    for fold in 0..k {
        let (train_idx, test_idx) = fold_partition(&folds, fold);
        let has_pos = train_idx.iter().any(|&i| labels[i]);
        let has_neg = train_idx.iter().any(|&i| !labels[i]);
        if !has_pos || !has_neg {
            return Err(Error::data(format!(
                "fold {}: training split lacks a {} sample",
                fold + 1,
                if has_pos { "negative" } else { "positive" }
            )));
        }
        let mut train_posts: Vec<&Post> = train_idx.iter().map(|&i| instagram[i]).collect();
        train_posts.extend(web.iter().copied());
        let models = fit_post_models(&train_posts, cfg)?;

        let test_posts: Vec<&Post> = test_idx.iter().map(|&i| instagram[i]).collect();
        let truth: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
        for method in POST_METHODS {
            let scores: Result<Vec<f64>> = test_posts
                .iter()
                .map(|p| models.predict(method, p, &cfg.fusion))
                .collect();
            let scores = scores?;
            let threshold = if method == "late_fusion" {
                cfg.fusion.threshold
            } else {
                0.5
            };
            let decisions: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
            let metrics = compute_metrics(&decisions, &scores, &truth)?;
            per_method.entry(method).or_default().push(metrics.clone());
            rows.push(CvRow {
                method: method.to_string(),
                expert: None,
                fold: Some(fold),
                metrics,
            });
        }
        fold_models.push(models);
    }

    for method in POST_METHODS {
        rows.push(CvRow {
            method: method.to_string(),
            expert: None,
            fold: None,
            metrics: mean_metrics(&per_method[method]),
        });
    }
    Ok(PostCvOutcome {
        report: CvReport { rows },
        fold_models,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DealerCvConfig {
    pub post: PostPipelineConfig,
    pub l1: L1Config,
    /// L1 strength used for the LR-select refit.
    pub refit_lambda: f64,
    /// Expert whose labels train the classifier.
    pub train_expert: String,
    /// Expert whose labels are the evaluation ground truth.
    pub eval_expert: String,
}

impl Default for DealerCvConfig {
    fn default() -> Self {
        Self {
            post: PostPipelineConfig::default(),
            l1: L1Config::default(),
            refit_lambda: 0.0,
            train_expert: "exp1".to_string(),
            eval_expert: "exp1".to_string(),
        }
    }
}

pub const DEALER_METHODS: [&str; 2] = ["lr", "lr_select"];

/// What got fitted inside one dealer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct DealerFoldFit {
    pub classifier: FusedClassifier,
    pub normalizer: Normalizer,
    pub lr: LogRegModel,
    pub lr_select: LogRegModel,
    pub retained: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DealerCvOutcome {
    pub report: CvReport,
    pub fold_fits: Vec<DealerFoldFit>,
}

fn expert_label(account: &Account, expert: &str) -> Result<bool> {
    account.dealer_labels.get(expert).copied().ok_or_else(|| {
        Error::data(format!(
            "account {} has no label from expert {expert}",
            account.id
        ))
    })
}

/// Full-pipeline stratified k-fold cross-validation over accounts.
///
/// Per fold, the post classifier is trained on the training accounts'
/// posts (plus web posts), account features are extracted from its
/// decisions, the normalizer and both LR variants are fitted on the
/// training accounts, and the held-out accounts are scored against the
/// evaluation expert's labels.
pub fn cross_validate_dealers(
    dataset: &Dataset,
    blacklist: &Blacklist,
    cfg: &DealerCvConfig,
    k: usize,
    seed: u64,
) -> Result<DealerCvOutcome> {
    let accounts: Vec<&Account> = dataset.accounts.iter().collect();
    if accounts.is_empty() {
        return Err(Error::data("no accounts to cross-validate"));
    }
    let train_labels: Vec<bool> = accounts
        .iter()
        .map(|a| expert_label(a, &cfg.train_expert))
        .collect::<Result<_>>()?;
    let eval_labels: Vec<bool> = accounts
        .iter()
        .map(|a| expert_label(a, &cfg.eval_expert))
        .collect::<Result<_>>()?;
    let all_posts: Vec<&Post> = dataset.posts.iter().collect();
    let web = web_subclass(&all_posts);
    let folds = split_folds(&train_labels, k, seed)?;

    let mut per_method: BTreeMap<&str, Vec<Metrics>> = BTreeMap::new();
    let mut fold_fits = Vec::with_capacity(k);
    let mut rows = Vec::new();

    for fold in 0..k {
        let (train_idx, test_idx) = fold_partition(&folds, fold);
        if !train_idx.iter().any(|&i| train_labels[i])
            || !train_idx.iter().any(|&i| !train_labels[i])
        {
            return Err(Error::data(format!(
                "fold {}: training split lacks a dealer or non-dealer account",
                fold + 1
            )));
        }

        // Post classifier from training accounts' timelines only.
        let mut train_posts: Vec<&Post> = train_idx
            .iter()
            .flat_map(|&i| accounts[i].posts.iter())
            .collect();
        train_posts.extend(web.iter().copied());
        let classifier = fit_fused_classifier(&train_posts, &cfg.post)?;

        let features_of = |idx: &[usize]| -> Result<Vec<Vec<f64>>> {
            idx.iter()
                .map(|&i| {
                    let account = accounts[i];
                    let posts: Vec<&Post> = account.posts.iter().collect();
                    let predictions = classifier.classify(&posts)?;
                    let decisions: HashMap<String, bool> = predictions
                        .into_iter()
                        .map(|p| (p.post_id, p.decision))
                        .collect();
                    Ok(assemble(account, &decisions, blacklist)?.to_vec())
                })
                .collect()
        };

        let train_x_raw = features_of(&train_idx)?;
        let normalizer = Normalizer::fit(&train_x_raw)?;
        let train_x = normalizer.apply_all(&train_x_raw)?;
        let train_y: Vec<bool> = train_idx.iter().map(|&i| train_labels[i]).collect();

        let lr = dealer::train_l1(&train_x, &train_y, &cfg.l1)?;
        let retained = dealer::feature_select(&lr.model, cfg.l1.select_epsilon);
        let refit_cfg = L1Config {
            lambda: cfg.refit_lambda,
            ..cfg.l1.clone()
        };
        let lr_select = dealer::refit(&train_x, &train_y, &retained, &refit_cfg)?;

        let test_x = normalizer.apply_all(&features_of(&test_idx)?)?;
        let eval_truth: Vec<bool> = test_idx.iter().map(|&i| eval_labels[i]).collect();
        for (method, fit) in DEALER_METHODS.iter().zip([&lr, &lr_select]) {
            let scores: Vec<f64> = test_x
                .iter()
                .map(|x| dealer::predict_dealer_prob(&fit.model, x))
                .collect::<Result<_>>()?;
            let decisions: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
            let metrics = compute_metrics(&decisions, &scores, &eval_truth)?;
            per_method.entry(method).or_default().push(metrics.clone());
            rows.push(CvRow {
                method: method.to_string(),
                expert: Some(cfg.eval_expert.clone()),
                fold: Some(fold),
                metrics,
            });
        }
        fold_fits.push(DealerFoldFit {
            classifier,
            normalizer,
            lr: lr.model,
            lr_select: lr_select.model,
            retained,
        });
    }

    for method in DEALER_METHODS {
        rows.push(CvRow {
            method: method.to_string(),
            expert: Some(cfg.eval_expert.clone()),
            fold: None,
            metrics: mean_metrics(&per_method[method]),
        });
    }
    Ok(DealerCvOutcome {
        report: CvReport { rows },
        fold_fits,
    })
}

/// Trains the dealer classifier (normalizer + LR, optionally with
/// selection and refit) on the full feature matrix. Returns the
/// normalizer, the fitted model, and the retained indices when selection
/// ran.
pub fn fit_dealer_models(
    features: &[Vec<f64>],
    labels: &[bool],
    l1: &L1Config,
    select: bool,
    refit_lambda: f64,
) -> Result<(Normalizer, FitResult, Option<Vec<usize>>)> {
    let normalizer = Normalizer::fit(features)?;
    let x = normalizer.apply_all(features)?;
    let fit = dealer::train_l1(&x, labels, l1)?;
    if !select {
        return Ok((normalizer, fit, None));
    }
    let retained = dealer::feature_select(&fit.model, l1.select_epsilon);
    let refit_cfg = L1Config {
        lambda: refit_lambda,
        ..l1.clone()
    };
    let refitted = dealer::refit(&x, labels, &retained, &refit_cfg)?;
    Ok((normalizer, refitted, Some(retained)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn confusion_metrics_match_hand_arithmetic() {
        // TP=2, FP=1, TN=5, FN=2
        let truth = vec![true, true, true, true, false, false, false, false, false, false];
        let decisions = vec![true, true, false, false, true, false, false, false, false, false];
        let scores: Vec<f64> = decisions.iter().map(|&d| if d { 0.9 } else { 0.1 }).collect();
        let m = compute_metrics(&decisions, &scores, &truth).unwrap();
        assert_eq!(
            m.confusion,
            Confusion {
                tp: 2,
                fp: 1,
                tn: 5,
                fn_: 2
            }
        );
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.f1 - 0.5714285714285715).abs() < 1e-12);
    }

    #[test]
    fn auc_counts_winning_and_losing_pairs() {
        let scores = vec![0.9, 0.8, 0.3];
        let truth = vec![true, false, true];
        let decisions = vec![true, true, false];
        let m = compute_metrics(&decisions, &scores, &truth).unwrap();
        assert_eq!(m.auc, Some(0.5));
    }

    #[test]
    fn auc_perfect_separation_is_one() {
        let scores = vec![0.9, 0.8, 0.2, 0.1];
        let truth = vec![true, true, false, false];
        let decisions = vec![true, true, false, false];
        let m = compute_metrics(&decisions, &scores, &truth).unwrap();
        assert_eq!(m.auc, Some(1.0));
    }

    #[test]
    fn auc_absent_for_single_class_truth() {
        let scores = vec![0.9, 0.8];
        let truth = vec![true, true];
        let m = compute_metrics(&[true, false], &scores, &truth).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.recall, 0.5);
    }

    /// Brute force over all positive-negative pairs, half credit for ties.
    fn auc_pairwise_oracle(scores: &[f64], truth: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &ti) in truth.iter().enumerate() {
            if !ti {
                continue;
            }
            for (j, &tj) in truth.iter().enumerate() {
                if tj {
                    continue;
                }
                total += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / total
    }

    #[test]
    fn auc_matches_pairwise_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for case in 0..100 {
            let n = rng.gen_range(2..=50);
            let mut truth: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            truth[0] = true;
            truth[1] = false;
            // Coarse score grid so ties actually happen.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=10) as f64 / 10.0).collect();
            let got = auc_rank(&scores, &truth).unwrap();
            let want = auc_pairwise_oracle(&scores, &truth);
            assert!(
                (got - want).abs() < 1e-12,
                "case {case}: rank {got} vs pairwise {want}"
            );
        }
    }

    #[test]
    fn metrics_invariant_to_sample_order() {
        let scores = vec![0.9, 0.4, 0.6, 0.2, 0.7];
        let truth = vec![true, false, true, false, false];
        let decisions = vec![true, false, true, false, true];
        let m1 = compute_metrics(&decisions, &scores, &truth).unwrap();
        let perm = [4, 2, 0, 3, 1];
        let m2 = compute_metrics(
            &perm.map(|i| decisions[i]),
            &perm.map(|i| scores[i]),
            &perm.map(|i| truth[i]),
        )
        .unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn agreement_rate_counts_equal_positions() {
        let a: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let mut b = a.clone();
        for item in b.iter_mut().take(6) {
            *item = !*item;
        }
        assert_eq!(agreement_rate(&a, &b).unwrap(), 0.94);
        assert_eq!(agreement_rate(&a, &a).unwrap(), 1.0);
        let flipped: Vec<bool> = a.iter().map(|x| !x).collect();
        assert_eq!(agreement_rate(&a, &flipped).unwrap(), 0.0);
    }

    #[test]
    fn agreement_rate_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a: Vec<bool> = (0..31).map(|_| rng.gen_bool(0.5)).collect();
        let b: Vec<bool> = (0..31).map(|_| rng.gen_bool(0.5)).collect();
        assert_eq!(
            agreement_rate(&a, &b).unwrap(),
            agreement_rate(&b, &a).unwrap()
        );
    }

    #[test]
    fn agreement_rate_rejects_length_mismatch() {
        assert!(agreement_rate(&[true], &[true, false]).is_err());
        assert!(agreement_rate(&[], &[]).is_err());
    }

    #[test]
    fn cross_expert_eval_scores_each_expert_separately() {
        let ids: Vec<String> = (0..4).map(|i| format!("a{i}")).collect();
        let decisions = vec![true, true, false, false];
        let scores = vec![0.9, 0.8, 0.2, 0.1];
        let mut experts = BTreeMap::new();
        experts.insert(
            "exp1".to_string(),
            ids.iter()
                .cloned()
                .zip([true, false, false, false])
                .collect::<BTreeMap<_, _>>(),
        );
        experts.insert(
            "exp2".to_string(),
            ids.iter()
                .cloned()
                .zip([true, true, false, false])
                .collect::<BTreeMap<_, _>>(),
        );
        let rows = cross_expert_eval(&ids, &decisions, &scores, &experts).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, "exp1");
        assert!((rows[0].1.precision - 0.5).abs() < 1e-12);
        assert_eq!(rows[1].0, "exp2");
        assert!((rows[1].1.precision - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_expert_eval_identical_labels_give_identical_rows() {
        let ids: Vec<String> = (0..3).map(|i| format!("a{i}")).collect();
        let labels: BTreeMap<String, bool> = ids
            .iter()
            .cloned()
            .zip([true, false, true])
            .collect();
        let mut experts = BTreeMap::new();
        experts.insert("e1".to_string(), labels.clone());
        experts.insert("e2".to_string(), labels);
        let rows =
            cross_expert_eval(&ids, &[true, false, false], &[0.8, 0.3, 0.4], &experts).unwrap();
        assert_eq!(rows[0].1, rows[1].1);
    }

    #[test]
    fn cross_expert_eval_missing_label_names_account() {
        let ids = vec!["a0".to_string(), "a1".to_string()];
        let mut experts = BTreeMap::new();
        let mut partial = BTreeMap::new();
        partial.insert("a0".to_string(), true);
        experts.insert("exp1".to_string(), partial);
        let err = cross_expert_eval(&ids, &[true, false], &[0.9, 0.1], &experts).unwrap_err();
        assert!(err.to_string().contains("a1"), "{err}");
    }
}
