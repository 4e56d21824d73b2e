//! Decision-level fusion of the image- and text-based probabilities.
//!
//! The fused score is a fixed linear weighting of the two classifier
//! outputs; the final per-post decision thresholds that score.

use serde::{Deserialize, Serialize};

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::multitask::MlpModel;
use crate::text::TextClassifier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Weight of the image-based classifier; the text classifier gets
    /// `1 - w_image`.
    pub w_image: f64,
    pub threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            w_image: 0.5,
            threshold: 0.5,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w_image) {
            return Err(Error::invalid(format!(
                "w_image {} not in [0,1]",
                self.w_image
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold {} not in (0,1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostPrediction {
    pub post_id: String,
    pub p_image: f64,
    pub p_text: f64,
    pub p_fused: f64,
    pub decision: bool,
}

/// Linear decision-level fusion: p = w*p_image + (1-w)*p_text, decision
/// true when p reaches the threshold (ties count as positive).
pub fn fuse(p_image: f64, p_text: f64, config: &FusionConfig) -> Result<(f64, bool)> {
    config.validate()?;
    for (name, p) in [("p_image", p_image), ("p_text", p_text)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::data(format!("{name} = {p} not in [0,1]")));
        }
    }
    let p_fused = config.w_image * p_image + (1.0 - config.w_image) * p_text;
    Ok((p_fused, p_fused >= config.threshold))
}

/// Runs both classifiers over the posts and fuses their probabilities;
/// output order matches input order.
pub fn classify_posts(
    posts: &[&Post],
    mlp: &MlpModel,
    text: &TextClassifier,
    config: &FusionConfig,
) -> Result<Vec<PostPrediction>> {
    config.validate()?;
    posts
        .iter()
        .map(|post| {
            let p_image = mlp.predict_drug_prob(&post.embedding)?;
            let p_text = text.predict_proba(post)?;
            let (p_fused, decision) = fuse(p_image, p_text, config)?;
            Ok(PostPrediction {
                post_id: post.id.clone(),
                p_image,
                p_text,
                p_fused,
                decision,
            })
        })
        .collect()
}
