//! Matrix backpropagation: a refinement pass over an already fitted layer
//! stack with step sizes `e0 / 2^it`.
//!
//! For layer `k` with prefix `Φ = X_1·…·X_{k-1}`:
//!
//! ```text
//! K = Φᵀ·I                      μ = ∏_{i<k} max|X_i|
//! P = μ·X_k·X_kᵀ               Z = clamp(X_k·N(Y_k))
//! G = (P·N⁻¹(Z) − K) ⊙ (max|X_k| · dN⁻¹(Z))
//! Y_k ← Y_k − step·X_kᵀ·G       X_k ← X_k − step·G·N(Y_k)ᵀ
//! ```
//!
//! `P` is taken as `X_k·X_kᵀ` so that every product is conformable.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::decomposer::{reconstruct_layers, LayerFactors};
use crate::error::{DemandError, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MbpConfig {
    pub enabled: bool,
    pub e0: f64,
    pub max_iter: usize,
    /// Reject any update that increases the reconstruction error at some depth.
    pub guard: bool,
}

impl Default for MbpConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            e0: 0.01,
            max_iter: 20,
            guard: true,
        }
    }
}

impl MbpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.e0 >= 0.0 && self.e0.is_finite()) {
            return Err(DemandError::Parameter(format!("mbp.e0 must be >= 0, got {}", self.e0)));
        }
        if self.max_iter < 1 {
            return Err(DemandError::Parameter("mbp.max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MbpReport {
    /// `‖reconstruct(d) − I‖_F` for every depth `d`, before the pass.
    pub errors_before: Vec<f64>,
    pub errors_after: Vec<f64>,
    /// Per-depth errors at the end of each iteration.
    pub trace: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
}

fn check_chain(layers: &[LayerFactors], input: &DenseMatrix) -> Result<()> {
    let Some(first) = layers.first() else {
        return Err(DemandError::Input("no layers to refine".into()));
    };
    if first.x.rows() != input.rows() {
        return Err(DemandError::shape("mbp: X_1 vs input", first.x.shape(), input.shape()));
    }
    for w in layers.windows(2) {
        if w[1].x.rows() != w[0].x.cols() {
            return Err(DemandError::shape("mbp: layer chain", w[0].x.shape(), w[1].x.shape()));
        }
    }
    for l in layers {
        if l.x.cols() != l.y.rows() {
            return Err(DemandError::shape("mbp: x·y", l.x.shape(), l.y.shape()));
        }
        if l.y.cols() != input.cols() {
            return Err(DemandError::shape("mbp: y vs input", l.y.shape(), input.shape()));
        }
        if l.s.shape() != input.shape() {
            return Err(DemandError::shape("mbp: background vs input", l.s.shape(), input.shape()));
        }
    }
    Ok(())
}

/// Reconstruction error at every depth `1..=M`.
pub fn reconstruction_errors(layers: &[LayerFactors], input: &DenseMatrix, kind: ActivationKind) -> Result<Vec<f64>> {
    (1..=layers.len())
        .map(|d| Ok(reconstruct_layers(layers, d, kind)?.sub(input)?.frobenius_norm()))
        .collect()
}

/// Candidate `(X_k, Y_k)` after one step on layer `k` (0-based).
fn layer_step(
    layers: &[LayerFactors],
    k: usize,
    input: &DenseMatrix,
    kind: ActivationKind,
    step: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let xk = &layers[k].x;
    let yk = &layers[k].y;
    let mut mu = 1.0;
    let mut prefix: Option<DenseMatrix> = None;
    for l in &layers[..k] {
        mu *= l.x.max_abs_entry();
        prefix = Some(match prefix {
            Some(p) => p.matmul(&l.x)?,
            None => l.x.clone(),
        });
    }
    let big_k = match &prefix {
        Some(p) => p.t_matmul(input)?,
        None => input.clone(),
    };
    let p = xk.matmul_t(xk)?.scale(mu);
    let features = kind.apply(yk);
    let z = kind.clamp_domain(&xk.matmul(&features)?);
    let c = kind.inverse_derivative(&z).scale(xk.max_abs_entry());
    let g = p.matmul(&kind.inverse(&z))?.sub(&big_k)?.hadamard(&c)?;
    let v = xk.t_matmul(&g)?;
    let y_new = yk.sub(&v.scale(step))?;
    let x_new = xk.sub(&g.matmul_t(&features)?.scale(step))?;
    Ok((x_new, y_new))
}

fn all_finite(m: &DenseMatrix) -> bool {
    m.as_slice().iter().all(|v| v.is_finite())
}

/// Runs the refinement and returns the updated layers together with the
/// per-depth error trace.
pub fn backpropagate_report(
    layers: &[LayerFactors],
    input: &DenseMatrix,
    cfg: &MbpConfig,
    kind: ActivationKind,
) -> Result<(Vec<LayerFactors>, MbpReport)> {
    cfg.validate()?;
    check_chain(layers, input)?;
    let mut current = layers.to_vec();
    let mut errors = reconstruction_errors(&current, input, kind)?;
    let errors_before = errors.clone();
    let mut trace = Vec::new();
    let (mut accepted, mut rejected) = (0, 0);

    if current.len() > 1 && cfg.e0 > 0.0 {
        for it in 1..=cfg.max_iter {
            let step = cfg.e0 * 0.5_f64.powi(it as i32);
            for k in 0..current.len() {
                let (x_new, y_new) = layer_step(&current, k, input, kind, step)?;
                if !all_finite(&x_new) || !all_finite(&y_new) {
                    rejected += 1;
                    continue;
                }
                let mut candidate = current.clone();
                candidate[k].x = x_new;
                candidate[k].y = y_new;
                let cand_errors = reconstruction_errors(&candidate, input, kind)?;
                let worse = cand_errors.iter().zip(&errors).any(|(n, o)| n > o);
                if cfg.guard && worse {
                    rejected += 1;
                    continue;
                }
                current = candidate;
                errors = cand_errors;
                accepted += 1;
            }
            trace.push(errors.clone());
        }
    }

    Ok((
        current,
        MbpReport {
            errors_before,
            errors_after: errors,
            trace,
            accepted,
            rejected,
        },
    ))
}

pub fn backpropagate(
    layers: &[LayerFactors],
    input: &DenseMatrix,
    cfg: &MbpConfig,
    kind: ActivationKind,
) -> Result<Vec<LayerFactors>> {
    backpropagate_report(layers, input, cfg, kind).map(|(l, _)| l)
}
