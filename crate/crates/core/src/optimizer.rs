//! Adam, soft-thresholding and the analytic gradient of the per-layer loss.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{DemandError, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        // alpha is larger than the usual 1e-3: Adam moves each entry by about
        // alpha per step, and a layer gets a few hundred steps to travel O(1).
        Self {
            alpha: 0.03,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(DemandError::Parameter(format!("adam.alpha must be > 0, got {}", self.alpha)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(DemandError::Parameter(format!("adam.{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(DemandError::Parameter(format!("adam.eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Moment estimates for one tracked parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    shape: (usize, usize),
    t: u64,
    cfg: AdamConfig,
}

impl AdamState {
    pub fn new(shape: (usize, usize), cfg: AdamConfig) -> Self {
        let n = shape.0 * shape.1;
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            shape,
            t: 0,
            cfg,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam update; returns the new parameter value.
    pub fn step(&mut self, param: &DenseMatrix, grad: &DenseMatrix) -> Result<DenseMatrix> {
        if param.shape() != self.shape {
            return Err(DemandError::shape("adam_step", self.shape, param.shape()));
        }
        if grad.shape() != self.shape {
            return Err(DemandError::shape("adam_step", self.shape, grad.shape()));
        }
        let AdamConfig { alpha, beta1, beta2, eps } = self.cfg;
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        let mut out = Vec::with_capacity(param.len());
        for (((p, &g), m), v) in param
            .as_slice()
            .iter()
            .zip(grad.as_slice())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            out.push(p - alpha * m_hat / (v_hat.sqrt() + eps));
        }
        DenseMatrix::new(param.rows(), param.cols(), out)
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, param: &DenseMatrix, grad: &DenseMatrix) -> Result<(DenseMatrix, AdamState)> {
    let mut next = state.clone();
    let p = next.step(param, grad)?;
    Ok((p, next))
}

/// Elementwise soft threshold `sign(x)·max(|x| − τ, 0)`.
pub fn shrinkage(m: &DenseMatrix, threshold: f64) -> Result<DenseMatrix> {
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(DemandError::Parameter(format!(
            "shrinkage threshold must be a finite value >= 0, got {threshold}"
        )));
    }
    Ok(m.map(|x| x.signum() * (x.abs() - threshold).max(0.0)))
}

/// `Φ·X_k`, where a missing prefix stands for the identity.
pub(crate) fn apply_prefix(prefix: Option<&DenseMatrix>, xk: &DenseMatrix) -> Result<DenseMatrix> {
    match prefix {
        Some(p) => p.matmul(xk),
        None => Ok(xk.clone()),
    }
}

pub(crate) fn check_layer_shapes(
    prefix: Option<&DenseMatrix>,
    xk: &DenseMatrix,
    yk: &DenseMatrix,
    sk: &DenseMatrix,
    input: &DenseMatrix,
) -> Result<()> {
    let (rows, inner) = prefix.map_or((input.rows(), xk.rows()), |p| p.shape());
    if inner != xk.rows() {
        return Err(DemandError::shape("layer: prefix·x", (rows, inner), xk.shape()));
    }
    if xk.cols() != yk.rows() {
        return Err(DemandError::shape("layer: x·y", xk.shape(), yk.shape()));
    }
    if rows != input.rows() || yk.cols() != input.cols() {
        return Err(DemandError::shape(
            "layer: reconstruction vs input",
            (rows, yk.cols()),
            input.shape(),
        ));
    }
    if sk.shape() != input.shape() {
        return Err(DemandError::shape("layer: background vs input", sk.shape(), input.shape()));
    }
    Ok(())
}

/// Pieces shared by the loss and its gradient.
pub(crate) struct LayerResidual {
    /// `Φ·X_k`
    pub weights: DenseMatrix,
    /// `N(Y_k)`
    pub features: DenseMatrix,
    /// `Φ·X_k·N(Y_k) − (I − S_k)`
    pub residual: DenseMatrix,
}

pub(crate) fn layer_residual(
    prefix: Option<&DenseMatrix>,
    xk: &DenseMatrix,
    yk: &DenseMatrix,
    sk: &DenseMatrix,
    input: &DenseMatrix,
    kind: ActivationKind,
) -> Result<LayerResidual> {
    check_layer_shapes(prefix, xk, yk, sk, input)?;
    let weights = apply_prefix(prefix, xk)?;
    let features = kind.apply(yk);
    let target = input.sub(sk)?;
    let residual = weights.matmul(&features)?.sub(&target)?;
    Ok(LayerResidual {
        weights,
        features,
        residual,
    })
}

/// Gradients of `λ/2·‖Φ·X_k·N(Y_k) − (I − S_k)‖²_F` with respect to `X_k` and
/// `Y_k`, holding the prefix product `Φ` and the background `S_k` fixed.
pub fn grad_layer(
    prefix: &DenseMatrix,
    xk: &DenseMatrix,
    yk: &DenseMatrix,
    sk: &DenseMatrix,
    input: &DenseMatrix,
    kind: ActivationKind,
    lambda: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let r = layer_residual(Some(prefix), xk, yk, sk, input, kind)?;
    Ok((grad_x_from(Some(prefix), &r, lambda)?, grad_y_from(&r, yk, kind, lambda)?))
}

// gX = λ·Φᵀ·E·N(Y)ᵀ
fn grad_x_from(prefix: Option<&DenseMatrix>, r: &LayerResidual, lambda: f64) -> Result<DenseMatrix> {
    let e_nt = r.residual.matmul_t(&r.features)?;
    let g = match prefix {
        Some(p) => p.t_matmul(&e_nt)?,
        None => e_nt,
    };
    Ok(g.scale(lambda))
}

// gY = λ·(Φ·X)ᵀ·E ⊙ N′(Y)
fn grad_y_from(r: &LayerResidual, yk: &DenseMatrix, kind: ActivationKind, lambda: f64) -> Result<DenseMatrix> {
    Ok(r.weights
        .t_matmul(&r.residual)?
        .hadamard(&kind.derivative(yk))?
        .scale(lambda))
}

pub(crate) fn grad_x(
    prefix: Option<&DenseMatrix>,
    xk: &DenseMatrix,
    yk: &DenseMatrix,
    sk: &DenseMatrix,
    input: &DenseMatrix,
    kind: ActivationKind,
    lambda: f64,
) -> Result<DenseMatrix> {
    let r = layer_residual(prefix, xk, yk, sk, input, kind)?;
    grad_x_from(prefix, &r, lambda)
}

pub(crate) fn grad_y(
    prefix: Option<&DenseMatrix>,
    xk: &DenseMatrix,
    yk: &DenseMatrix,
    sk: &DenseMatrix,
    input: &DenseMatrix,
    kind: ActivationKind,
    lambda: f64,
) -> Result<DenseMatrix> {
    let r = layer_residual(prefix, xk, yk, sk, input, kind)?;
    grad_y_from(&r, yk, kind, lambda)
}
