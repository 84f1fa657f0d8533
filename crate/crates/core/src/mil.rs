//! Bag-level aggregation of patch scores and the bag loss.
//!
//! Each aggregator records which patches contributed to the bag score and
//! with what weight, so the loss gradient can be routed back to exactly
//! those patches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clipped to `[EPS, 1 - EPS]` inside the loss.
pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Max,
    /// Mean of the `k` highest scores.
    TopK(usize),
}

impl Aggregator {
    pub fn aggregate(&self, patch_scores: &[f64]) -> Result<BagPrediction> {
        match *self {
            Aggregator::Max => aggregate_max(patch_scores),
            Aggregator::TopK(k) => aggregate_topk(patch_scores, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagPrediction {
    pub score: f64,
    /// `(patch index, routing weight)`; weights sum to 1.
    pub contributors: Vec<(usize, f64)>,
    pub patch_scores: Vec<f64>,
}

impl BagPrediction {
    pub fn predicted_label(&self) -> u8 {
        u8::from(self.score > 0.5)
    }
}

/// Indices sorted by descending score, ties by ascending index.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn aggregate_max(patch_scores: &[f64]) -> Result<BagPrediction> {
    aggregate_topk(patch_scores, 1)
}

pub fn aggregate_topk(patch_scores: &[f64], k: usize) -> Result<BagPrediction> {
    if patch_scores.is_empty() {
        return Err(Error::EmptyBag);
    }
    if k == 0 {
        return Err(Error::Config("top-k needs k >= 1".into()));
    }
    let k = k.min(patch_scores.len());
    let top = &ranked(patch_scores)[..k];
    let score = top.iter().map(|&i| patch_scores[i]).sum::<f64>() / k as f64;
    let weight = 1.0 / k as f64;
    Ok(BagPrediction {
        score,
        contributors: top.iter().map(|&i| (i, weight)).collect(),
        patch_scores: patch_scores.to_vec(),
    })
}

/// Binary cross-entropy of the bag score and its gradient with respect to
/// every patch score. Non-contributors get exactly zero.
///
/// The bag score is clipped to `[LOSS_EPS, 1 - LOSS_EPS]`. A prediction
/// saturated on the side of its own label sits in the flat part of the clip
/// and gets zero gradient; one saturated on the wrong side keeps the
/// gradient of the clipped value so it can still recover.
pub fn bag_loss_and_grads(pred: &BagPrediction, label: u8) -> (f64, Vec<f64>) {
    let y = f64::from(label);
    let p = pred.score.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    let saturated_correct =
        (label == 1 && pred.score >= 1.0 - LOSS_EPS) || (label == 0 && pred.score <= LOSS_EPS);
    let d_bag = if saturated_correct {
        0.0
    } else {
        -y / p + (1.0 - y) / (1.0 - p)
    };
    let mut grads = vec![0.0; pred.patch_scores.len()];
    for &(i, w) in &pred.contributors {
        grads[i] = d_bag * w;
    }
    (loss, grads)
}
