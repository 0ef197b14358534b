//! Rank estimation from the diagonal of a column-pivoted QR factorization.
//!
//! Three statistics over `d_i = |R_ii|` each vote for a position; the
//! estimate is the largest vote, capped one below the diagonal length.

use serde::{Deserialize, Serialize};

use crate::error::{DemandError, Result};
use crate::matrix::{qr_pivoted, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankConfig {
    /// Window length for the weighted correlation.
    pub wc_window: usize,
    /// Floor applied to every denominator.
    pub eps_denom: f64,
    pub min_rank: usize,
    /// A window whose standard deviation is at most `wc_flat_tol · max(d)`
    /// is treated as constant.
    pub wc_flat_tol: f64,
    /// A window whose standard deviation is at most `wc_flat_cv` times its
    /// mean is treated as constant.
    pub wc_flat_cv: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            wc_window: 3,
            eps_denom: 1e-12,
            min_rank: 1,
            wc_flat_tol: 1e-4,
            wc_flat_cv: 0.1,
        }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.wc_window < 2 {
            return Err(DemandError::Parameter(format!(
                "rank.wc_window must be >= 2, got {}",
                self.wc_window
            )));
        }
        if !(self.eps_denom > 0.0 && self.eps_denom.is_finite()) {
            return Err(DemandError::Parameter(format!(
                "rank.eps_denom must be > 0, got {}",
                self.eps_denom
            )));
        }
        if self.min_rank < 1 {
            return Err(DemandError::Parameter("rank.min_rank must be >= 1".into()));
        }
        for (name, v) in [("wc_flat_tol", self.wc_flat_tol), ("wc_flat_cv", self.wc_flat_cv)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DemandError::Parameter(format!("rank.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEstimate {
    pub diag: Vec<f64>,
    /// 1-based argmax positions of each statistic.
    pub wr_pos: usize,
    pub wd_pos: usize,
    pub wc_pos: usize,
    pub est: usize,
}

fn require_len(d: &[f64], min: usize, what: &str) -> Result<()> {
    if d.len() < min {
        return Err(DemandError::Degenerate(format!(
            "{what} needs at least {min} diagonal values, got {}",
            d.len()
        )));
    }
    Ok(())
}

/// 1-based position of the largest entry; ties go to the lowest index.
/// Returns 1 for an empty sequence.
pub fn argmax_position(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best + 1
}

/// `d_i / max(d_{i+1}, eps)` for `i = 1..L-1`.
pub fn raw_ratios(d: &[f64], eps_denom: f64) -> Result<Vec<f64>> {
    require_len(d, 2, "weighted ratio")?;
    Ok(d.windows(2).map(|w| w[0] / w[1].max(eps_denom)).collect())
}

/// Raw ratios rescaled by `(L - 2) / sum`.
pub fn weighted_ratio(d: &[f64], eps_denom: f64) -> Result<Vec<f64>> {
    let raw = raw_ratios(d, eps_denom)?;
    let sum: f64 = raw.iter().sum();
    let scale = (d.len() as f64 - 2.0) / sum.max(eps_denom);
    Ok(raw.into_iter().map(|r| r * scale).collect())
}

/// `|d_i - d_{i-1}| / max(d_1 + … + d_{i-1}, eps)` for `i = 2..L`.
pub fn weighted_difference(d: &[f64], eps_denom: f64) -> Result<Vec<f64>> {
    require_len(d, 2, "weighted difference")?;
    let mut out = Vec::with_capacity(d.len() - 1);
    let mut cum = 0.0;
    for i in 1..d.len() {
        cum += d[i - 1];
        out.push((d[i] - d[i - 1]).abs() / cum.max(eps_denom));
    }
    Ok(out)
}

fn is_flat(w: &[f64], scale: f64, cfg: &RankConfig) -> bool {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    sd == 0.0 || sd <= cfg.wc_flat_tol * scale || sd <= cfg.wc_flat_cv * mean
}

fn window_corr(a: &[f64], b: &[f64], scale: f64, cfg: &RankConfig) -> f64 {
    if is_flat(a, scale, cfg) || is_flat(b, scale, cfg) {
        return 0.0;
    }
    crate::evaluation::pearson(a, b).unwrap_or(0.0)
}

/// Change in correlation between consecutive length-`w` windows of `d`.
///
/// With `W(a) = (d_{a-w+1}, …, d_a)`, entry `i` (for `i = w+2..L`) is
/// `|corr(W(i-2), W(i-1)) - corr(W(i-1), W(i))| / (d_1 + … + d_{min(i+1, L)})`.
/// Empty when `L < w + 2`.
pub fn weighted_correlation(d: &[f64], cfg: &RankConfig) -> Vec<f64> {
    let w = cfg.wc_window;
    let len = d.len();
    if len < w + 2 {
        return Vec::new();
    }
    let scale = d.iter().fold(0.0_f64, |m, &x| m.max(x));
    let window = |end: usize| &d[end - w..end];
    let mut prefix = vec![0.0; len + 1];
    for (i, &x) in d.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    (w + 2..=len)
        .map(|i| {
            let c1 = window_corr(window(i - 2), window(i - 1), scale, cfg);
            let c2 = window_corr(window(i - 1), window(i), scale, cfg);
            (c1 - c2).abs() / prefix[(i + 1).min(len)].max(cfg.eps_denom)
        })
        .collect()
}

/// Estimates the number of latent components of `m`.
pub fn estimate_rank(m: &DenseMatrix, cfg: &RankConfig) -> Result<RankEstimate> {
    cfg.validate()?;
    let qr = if m.rows() < m.cols() {
        qr_pivoted(&m.transpose())
    } else {
        qr_pivoted(m)
    };
    let diag = qr.diag_abs();
    rank_from_diag(diag, cfg)
}

/// Combines the three statistics over an already computed diagonal.
pub fn rank_from_diag(diag: Vec<f64>, cfg: &RankConfig) -> Result<RankEstimate> {
    if diag.is_empty() {
        return Err(DemandError::Degenerate("empty diagonal".into()));
    }
    if diag.len() == 1 {
        return Ok(RankEstimate {
            diag,
            wr_pos: 1,
            wd_pos: 1,
            wc_pos: 1,
            est: 1,
        });
    }
    let wr_pos = argmax_position(&weighted_ratio(&diag, cfg.eps_denom)?);
    let wd_pos = argmax_position(&weighted_difference(&diag, cfg.eps_denom)?);
    let wc_pos = argmax_position(&weighted_correlation(&diag, cfg));
    let est = wr_pos
        .max(wd_pos)
        .max(wc_pos)
        .max(cfg.min_rank)
        .min(diag.len() - 1);
    Ok(RankEstimate {
        diag,
        wr_pos,
        wd_pos,
        wc_pos,
        est,
    })
}
