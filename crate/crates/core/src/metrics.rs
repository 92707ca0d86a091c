//! Average precision and partial accuracy, per sample and accumulated.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Accumulated metrics over a stream prefix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricState {
    pub ap: f64,
    pub pa: f64,
    /// Samples counted for PA.
    pub n: usize,
    /// Samples counted for AP (those with at least one positive label).
    pub n_ap: usize,
    pub k: usize,
}

impl MetricState {
    pub fn new(k: usize) -> Self {
        MetricState {
            k,
            ..MetricState::default()
        }
    }

    /// Scores one prediction; samples without positive labels only count for PA.
    pub fn observe(&mut self, yhat: &[f64], ycrisp: &[u8], y: &[u8]) -> Result<()> {
        let matches = pa_contribution(ycrisp, y)?;
        match ap_contribution(yhat, y) {
            Ok(c) => *self = update_ap(*self, c),
            Err(Error::NoPositiveLabel) => {}
            Err(e) => return Err(e),
        }
        *self = update_pa(*self, matches);
        Ok(())
    }
}

/// 1-based rank positions of the labels under a stable descending sort.
fn ranks(yhat: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..yhat.len()).collect();
    order.sort_by(|&a, &b| yhat[b].total_cmp(&yhat[a]));
    let mut rank = vec![0; yhat.len()];
    for (pos, &l) in order.iter().enumerate() {
        rank[l] = pos + 1;
    }
    rank
}

/// `(1/|L|) Σ_{l∈L} |{l* ∈ L : ŷ_{l*} ≥ ŷ_l}| / rank_l`, where exact ties
/// are resolved by the same order that defines the ranks.
pub fn ap_contribution(yhat: &[f64], y: &[u8]) -> Result<f64> {
    check_dim(y.len(), yhat.len())?;
    let positives: Vec<usize> = (0..y.len()).filter(|&l| y[l] == 1).collect();
    if positives.is_empty() {
        return Err(Error::NoPositiveLabel);
    }
    let rank = ranks(yhat);
    let total: f64 = positives
        .iter()
        .map(|&l| {
            let above = positives.iter().filter(|&&o| rank[o] <= rank[l]).count();
            above as f64 / rank[l] as f64
        })
        .sum();
    Ok(total / positives.len() as f64)
}

/// Number of positions where the crisp prediction equals the truth.
pub fn pa_contribution(ycrisp: &[u8], y: &[u8]) -> Result<usize> {
    check_dim(y.len(), ycrisp.len())?;
    Ok(ycrisp.iter().zip(y).filter(|(a, b)| a == b).count())
}

pub fn update_ap(state: MetricState, contribution: f64) -> MetricState {
    let n = state.n_ap as f64;
    MetricState {
        ap: (state.ap * n + contribution) / (n + 1.0),
        n_ap: state.n_ap + 1,
        ..state
    }
}

pub fn update_pa(state: MetricState, matches: usize) -> MetricState {
    let kn = (state.k * state.n) as f64;
    MetricState {
        pa: (state.pa * kn + matches as f64) / (state.k * (state.n + 1)) as f64,
        n: state.n + 1,
        ..state
    }
}
