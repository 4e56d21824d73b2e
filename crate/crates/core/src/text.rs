//! Text features and the naive Bayes post classifier.
//!
//! Tags contribute unigrams, captions unigrams plus bigrams; both are
//! capped at the top 1000 terms by corpus frequency, scaled by smoothed
//! tf-idf, and L2-normalized into one vector per post (up to 2000
//! dimensions). A multinomial naive Bayes over those weights predicts the
//! probability that a post is drug-related.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Post, Source};
use crate::error::{Error, Result};

pub const DEFAULT_VOCAB_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Tags,
    Caption,
}

/// Which part of the concatenated tf-idf vector feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSelection {
    TagsOnly,
    CaptionOnly,
    Combined,
}

/// Lowercases and splits on runs of non-alphanumeric characters; `#` and
/// `_` count as separators too, so hashtags lose their marker and snake
/// case splits. Empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|tok| !tok.is_empty())
        .map(str::to_string)
        .collect()
}

/// Tags keep unigrams only; captions add adjacent-pair bigrams joined by
/// a single space, after the unigrams.
pub fn extract_ngrams(tokens: &[String], field: Field) -> Vec<String> {
    let mut grams: Vec<String> = tokens.to_vec();
    if field == Field::Caption {
        for pair in tokens.windows(2) {
            grams.push(format!("{} {}", pair[0], pair[1]));
        }
    }
    grams
}

/// All n-grams of one post for the given field. Tags are tokenized per
/// tag string.
pub fn post_ngrams(post: &Post, field: Field) -> Vec<String> {
    match field {
        Field::Tags => post
            .tags
            .iter()
            .flat_map(|tag| extract_ngrams(&tokenize(tag), Field::Tags))
            .collect(),
        Field::Caption => extract_ngrams(&tokenize(&post.caption), Field::Caption),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    pub field: Field,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }
}

/// Top-`cap` terms by total corpus frequency, ties broken lexicographically
/// ascending so builds are deterministic.
pub fn build_vocab(corpus: &[&Post], field: Field, cap: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::data("cannot build vocabulary from an empty corpus"));
    }
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    for post in corpus {
        for gram in post_ngrams(post, field) {
            *freq.entry(gram).or_insert(0) += 1;
        }
    }
    let mut terms: Vec<(String, u64)> = freq.into_iter().collect();
    // BTreeMap iteration is already lexicographic, so a stable sort by
    // descending count leaves ties in ascending term order.
    terms.sort_by_key(|t| std::cmp::Reverse(t.1));
    let terms = terms.into_iter().take(cap).map(|(t, _)| t).collect();
    Ok(Vocabulary { terms, field })
}

/// Fitted tf-idf weights over the concatenated tag+caption feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub tag_vocab: Vocabulary,
    pub caption_vocab: Vocabulary,
    /// One weight per combined feature: tag terms first, then caption terms.
    pub idf: Vec<f64>,
}

impl TfIdfModel {
    /// Fits both vocabularies and idf weights on the corpus.
    pub fn fit(corpus: &[&Post], cap: usize) -> Result<Self> {
        let tag_vocab = build_vocab(corpus, Field::Tags, cap)?;
        let caption_vocab = build_vocab(corpus, Field::Caption, cap)?;
        Self::fit_with_vocabs(corpus, tag_vocab, caption_vocab)
    }

    /// Fits idf weights on the corpus for the given vocabularies.
    /// idf = ln((1+N)/(1+df)) + 1 with df counted per field.
    pub fn fit_with_vocabs(
        corpus: &[&Post],
        tag_vocab: Vocabulary,
        caption_vocab: Vocabulary,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::data("cannot fit idf on an empty corpus"));
        }
        let n = corpus.len() as f64;
        let mut idf = Vec::with_capacity(tag_vocab.len() + caption_vocab.len());
        for (vocab, field) in [(&tag_vocab, Field::Tags), (&caption_vocab, Field::Caption)] {
            let mut df = vec![0u64; vocab.len()];
            let index = vocab.index();
            for post in corpus {
                let seen: HashSet<usize> = post_ngrams(post, field)
                    .iter()
                    .filter_map(|g| index.get(g.as_str()).copied())
                    .collect();
                for i in seen {
                    df[i] += 1;
                }
            }
            idf.extend(df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0));
        }
        Ok(Self {
            tag_vocab,
            caption_vocab,
            idf,
        })
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Dimension of the selected sub-vector.
    pub fn dim_for(&self, selection: FieldSelection) -> usize {
        match selection {
            FieldSelection::TagsOnly => self.tag_vocab.len(),
            FieldSelection::CaptionOnly => self.caption_vocab.len(),
            FieldSelection::Combined => self.dim(),
        }
    }

    /// tf×idf over the selected fields, L2-normalized (a zero vector stays
    /// zero). Out-of-vocabulary terms are ignored.
    pub fn vectorize_selected(&self, post: &Post, selection: FieldSelection) -> Vec<f64> {
        let tag_dim = self.tag_vocab.len();
        let mut parts: Vec<(Field, usize, &Vocabulary)> = Vec::new();
        if selection != FieldSelection::CaptionOnly {
            parts.push((Field::Tags, 0, &self.tag_vocab));
        }
        if selection != FieldSelection::TagsOnly {
            let offset = if selection == FieldSelection::Combined { tag_dim } else { 0 };
            parts.push((Field::Caption, offset, &self.caption_vocab));
        }

        let mut vec = vec![0.0; self.dim_for(selection)];
        for (field, offset, vocab) in parts {
            let index = vocab.index();
            for gram in post_ngrams(post, field) {
                if let Some(&i) = index.get(gram.as_str()) {
                    let idf_i = match field {
                        Field::Tags => self.idf[i],
                        Field::Caption => self.idf[tag_dim + i],
                    };
                    vec[offset + i] += idf_i;
                }
            }
        }
        l2_normalize(&mut vec);
        vec
    }

    /// The full concatenated tag+caption vector.
    pub fn vectorize(&self, post: &Post) -> Vec<f64> {
        self.vectorize_selected(post, FieldSelection::Combined)
    }
}

fn l2_normalize(vec: &mut [f64]) {
    let norm = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in vec.iter_mut() {
            *v /= norm;
        }
    }
}

/// Multinomial naive Bayes over (possibly fractional) tf-idf weights,
/// classes {negative, drug}. Index 0 = negative, 1 = drug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub log_prior: [f64; 2],
    pub log_likelihood: [Vec<f64>; 2],
    pub alpha: f64,
}

/// Laplace-smoothed multinomial fit. `labels[i]` true means drug.
pub fn nb_train(vectors: &[Vec<f64>], labels: &[bool], alpha: f64) -> Result<NaiveBayesModel> {
    if vectors.len() != labels.len() {
        return Err(Error::data(format!(
            "got {} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if alpha <= 0.0 {
        return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data(
            "naive Bayes needs at least one sample of each class",
        ));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::data("inconsistent vector dimensions"));
    }

    let mut counts = [vec![0.0f64; dim], vec![0.0f64; dim]];
    for (vec, &label) in vectors.iter().zip(labels) {
        let class = usize::from(label);
        for (c, v) in counts[class].iter_mut().zip(vec) {
            *c += v;
        }
    }
    let log_likelihood = counts.map(|class_counts| {
        let total: f64 = class_counts.iter().sum();
        let denom = total + alpha * dim as f64;
        class_counts
            .iter()
            .map(|&c| ((c + alpha) / denom).ln())
            .collect::<Vec<f64>>()
    });
    let n = labels.len() as f64;
    Ok(NaiveBayesModel {
        log_prior: [(n_neg as f64 / n).ln(), (n_pos as f64 / n).ln()],
        log_likelihood,
        alpha,
    })
}

/// Unnormalized per-class log posteriors.
fn log_scores(model: &NaiveBayesModel, vector: &[f64]) -> Result<[f64; 2]> {
    let dim = model.log_likelihood[0].len();
    if vector.len() != dim {
        return Err(Error::data(format!(
            "vector dim {} \u{2260} model dim {dim}",
            vector.len()
        )));
    }
    let mut scores = [0.0; 2];
    for (class, score) in scores.iter_mut().enumerate() {
        *score = model.log_prior[class]
            + vector
                .iter()
                .zip(&model.log_likelihood[class])
                .map(|(x, ll)| x * ll)
                .sum::<f64>();
    }
    Ok(scores)
}

/// Posterior over both classes, normalized in log space.
/// Returns [P(negative|x), P(drug|x)].
pub fn nb_posterior(model: &NaiveBayesModel, vector: &[f64]) -> Result<[f64; 2]> {
    let scores = log_scores(model, vector)?;
    let max = scores[0].max(scores[1]);
    let exp = [(scores[0] - max).exp(), (scores[1] - max).exp()];
    let z = exp[0] + exp[1];
    Ok([exp[0] / z, exp[1] / z])
}

/// P(drug | vector), in [0,1].
pub fn nb_predict_proba(model: &NaiveBayesModel, vector: &[f64]) -> Result<f64> {
    Ok(nb_posterior(model, vector)?[1])
}

/// Text-side classifier: tf-idf features over a field selection plus the
/// naive Bayes fitted on them.
#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier {
    pub tfidf: TfIdfModel,
    pub nb: NaiveBayesModel,
    pub selection: FieldSelection,
}

impl TextClassifier {
    /// Fits tf-idf and naive Bayes on labeled Instagram posts. Posts
    /// without a binary label (or web-sourced ones) are skipped.
    pub fn fit(posts: &[&Post], selection: FieldSelection, cap: usize, alpha: f64) -> Result<Self> {
        let labeled: Vec<&Post> = posts
            .iter()
            .copied()
            .filter(|p| {
                p.source == Source::Instagram
                    && matches!(p.label, Some(Label::Drug) | Some(Label::Negative))
            })
            .collect();
        if labeled.is_empty() {
            return Err(Error::data("no labeled instagram posts to fit on"));
        }
        let tfidf = TfIdfModel::fit(&labeled, cap)?;
        let vectors: Vec<Vec<f64>> = labeled
            .iter()
            .map(|p| tfidf.vectorize_selected(p, selection))
            .collect();
        let labels: Vec<bool> = labeled.iter().map(|p| p.label == Some(Label::Drug)).collect();
        let nb = nb_train(&vectors, &labels, alpha)?;
        Ok(Self { tfidf, nb, selection })
    }

    pub fn predict_proba(&self, post: &Post) -> Result<f64> {
        let vector = self.tfidf.vectorize_selected(post, self.selection);
        nb_predict_proba(&self.nb, &vector)
    }
}
