//! Layer-by-layer decomposition `I ≈ X_1·X_2·…·X_k·N(Y_k) + S_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{DemandError, Result};
use crate::matrix::DenseMatrix;
use crate::mbp::{backpropagate_report, MbpConfig, MbpReport};
use crate::optimizer::{apply_prefix, grad_x, grad_y, layer_residual, shrinkage, AdamConfig, AdamState};
use crate::rank::{estimate_rank, RankConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandConfig {
    pub lambda: f64,
    pub max_iters_per_layer: usize,
    pub rel_tol: f64,
    pub max_layers: usize,
    pub activation: ActivationKind,
    pub adam: AdamConfig,
    pub rank: RankConfig,
    pub mbp: MbpConfig,
    pub seed: u64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            max_iters_per_layer: 500,
            rel_tol: 1e-6,
            max_layers: 10,
            activation: ActivationKind::Sigmoid,
            adam: AdamConfig::default(),
            rank: RankConfig::default(),
            mbp: MbpConfig::default(),
            seed: 0,
        }
    }
}

impl DemandConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 1.0 && self.lambda.is_finite()) {
            return Err(DemandError::Parameter(format!("lambda must be > 1, got {}", self.lambda)));
        }
        if self.max_iters_per_layer < 1 {
            return Err(DemandError::Parameter("max_iters_per_layer must be >= 1".into()));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(DemandError::Parameter(format!("rel_tol must be >= 0, got {}", self.rel_tol)));
        }
        if self.max_layers < 1 {
            return Err(DemandError::Parameter("max_layers must be >= 1".into()));
        }
        self.adam.validate()?;
        self.rank.validate()?;
        self.mbp.validate()
    }
}

/// One layer: weights `X_k`, pre-activation features `Y_k` and background `S_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFactors {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub s: DenseMatrix,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub layers: Vec<LayerFactors>,
    /// Loss after every sweep, one sequence per layer.
    pub loss_history: Vec<Vec<f64>>,
    pub config: DemandConfig,
    pub seed: u64,
    /// Rank estimated for the layer after the last one.
    pub next_rank_estimate: usize,
    /// True when the loop stopped at `max_layers` with an estimate above 1.
    pub hit_layer_cap: bool,
    pub mbp: Option<MbpReport>,
}

impl DecompositionResult {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.rank).collect()
    }
}

/// `λ/2·‖Φ·X_k·N(Y_k) − (I − S_k)‖²_F + ‖S_k‖₁/λ`.
pub fn layer_loss(
    prefix: &DenseMatrix,
    xk: &DenseMatrix,
    yk: &DenseMatrix,
    sk: &DenseMatrix,
    input: &DenseMatrix,
    kind: ActivationKind,
    lambda: f64,
) -> Result<f64> {
    layer_loss_opt(Some(prefix), xk, yk, sk, input, kind, lambda)
}

fn layer_loss_opt(
    prefix: Option<&DenseMatrix>,
    xk: &DenseMatrix,
    yk: &DenseMatrix,
    sk: &DenseMatrix,
    input: &DenseMatrix,
    kind: ActivationKind,
    lambda: f64,
) -> Result<f64> {
    let r = layer_residual(prefix, xk, yk, sk, input, kind)?;
    Ok(lambda / 2.0 * r.residual.frobenius_norm_sq() + sk.l1_norm() / lambda)
}

/// `X_1·…·X_depth`.
pub fn weight_product(layers: &[LayerFactors], depth: usize) -> Result<DenseMatrix> {
    if depth == 0 || depth > layers.len() {
        return Err(DemandError::Parameter(format!(
            "depth {depth} out of range 1..={}",
            layers.len()
        )));
    }
    let mut acc = layers[0].x.clone();
    for l in &layers[1..depth] {
        acc = acc.matmul(&l.x)?;
    }
    Ok(acc)
}

pub(crate) fn reconstruct_layers(layers: &[LayerFactors], depth: usize, kind: ActivationKind) -> Result<DenseMatrix> {
    let w = weight_product(layers, depth)?;
    let l = &layers[depth - 1];
    w.matmul(&kind.apply(&l.y))?.add(&l.s)
}

/// `(X_1·…·X_depth)·N(Y_depth) + S_depth` for `depth` in `1..=M`.
pub fn reconstruct(result: &DecompositionResult, depth: usize) -> Result<DenseMatrix> {
    reconstruct_layers(&result.layers, depth, result.config.activation)
}

/// Activated feature rows `N(Y_k)` of layer `layer` (1-based).
pub fn components(result: &DecompositionResult, layer: usize) -> Result<DenseMatrix> {
    if layer == 0 || layer > result.layers.len() {
        return Err(DemandError::Parameter(format!(
            "layer {layer} out of range 1..={}",
            result.layers.len()
        )));
    }
    Ok(result.config.activation.apply(&result.layers[layer - 1].y))
}

fn trivial_layer(input: &DenseMatrix, kind: ActivationKind) -> LayerFactors {
    let (t, m) = input.shape();
    if input.is_all_zero() {
        return LayerFactors {
            x: DenseMatrix::zeros(t, 1),
            y: DenseMatrix::zeros(1, m),
            s: DenseMatrix::zeros(t, m),
            rank: 1,
        };
    }
    // 1×1 input a: choose y so that N(y) is nonzero and solve for x
    let y0 = match kind {
        ActivationKind::Sigmoid => 0.0,
        ActivationKind::Identity => 1.0,
    };
    let y = DenseMatrix::filled(1, 1, y0);
    let n = kind.apply(&y).get(0, 0);
    LayerFactors {
        x: DenseMatrix::filled(1, 1, input.get(0, 0) / n),
        y,
        s: DenseMatrix::zeros(1, 1),
        rank: 1,
    }
}

fn uniform_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> DenseMatrix {
    let scale = 1.0 / (rank as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * scale).expect("positive dims")
}

struct LayerFit {
    factors: LayerFactors,
    history: Vec<f64>,
}

fn fit_layer(
    input: &DenseMatrix,
    prefix: Option<&DenseMatrix>,
    rank: usize,
    cfg: &DemandConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LayerFit> {
    let kind = cfg.activation;
    let lambda = cfg.lambda;
    let inner = prefix.map_or(input.rows(), |p| p.cols());
    let mut x = uniform_init(rng, inner, rank, rank);
    let mut y = uniform_init(rng, rank, input.cols(), rank);
    let mut s = DenseMatrix::zeros(input.rows(), input.cols());
    let mut adam_x = AdamState::new(x.shape(), cfg.adam);
    let mut adam_y = AdamState::new(y.shape(), cfg.adam);
    let mut history = Vec::new();
    let mut prev: Option<f64> = None;

    for _ in 0..cfg.max_iters_per_layer {
        let gx = grad_x(prefix, &x, &y, &s, input, kind, lambda)?;
        x = adam_x.step(&x, &gx)?;
        let gy = grad_y(prefix, &x, &y, &s, input, kind, lambda)?;
        y = adam_y.step(&y, &gy)?;
        let recon = apply_prefix(prefix, &x)?.matmul(&kind.apply(&y))?;
        s = shrinkage(&input.sub(&recon)?, 1.0 / lambda)?;
        let loss = layer_loss_opt(prefix, &x, &y, &s, input, kind, lambda)?;
        if !loss.is_finite() {
            return Err(DemandError::Degenerate(format!(
                "layer loss diverged to {loss}; lower adam.alpha or lambda"
            )));
        }
        history.push(loss);
        if prev.is_some_and(|p| (p - loss).abs() <= cfg.rel_tol * p.abs()) {
            break;
        }
        prev = Some(loss);
    }
    Ok(LayerFit {
        factors: LayerFactors { x, y, s, rank },
        history,
    })
}

/// Stacks layers until the estimated next rank reaches 1 or `max_layers`.
pub fn decompose(input: &DenseMatrix, cfg: &DemandConfig) -> Result<DecompositionResult> {
    cfg.validate()?;
    if input.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(DemandError::Input("input contains non-finite values".into()));
    }
    let kind = cfg.activation;

    if input.is_all_zero() || input.shape() == (1, 1) {
        return Ok(DecompositionResult {
            layers: vec![trivial_layer(input, kind)],
            loss_history: vec![vec![0.0]],
            config: cfg.clone(),
            seed: cfg.seed,
            next_rank_estimate: 1,
            hit_layer_cap: false,
            mbp: None,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers: Vec<LayerFactors> = Vec::new();
    let mut loss_history = Vec::new();
    let mut prefix: Option<DenseMatrix> = None;
    let mut rank = estimate_rank(input, &cfg.rank)?.est;
    let mut hit_layer_cap = false;

    let next_rank_estimate = loop {
        let fit = fit_layer(input, prefix.as_ref(), rank, cfg, &mut rng)?;
        prefix = Some(apply_prefix(prefix.as_ref(), &fit.factors.x)?);
        // the next size comes from the pre-activation features
        let next = estimate_rank(&fit.factors.y, &cfg.rank)?.est;
        layers.push(fit.factors);
        loss_history.push(fit.history);
        if next <= 1 {
            break next;
        }
        if layers.len() >= cfg.max_layers {
            hit_layer_cap = true;
            break next;
        }
        rank = next;
    };

    let mbp = if cfg.mbp.enabled {
        let (refined, report) = backpropagate_report(&layers, input, &cfg.mbp, kind)?;
        layers = refined;
        Some(report)
    } else {
        None
    };

    Ok(DecompositionResult {
        layers,
        loss_history,
        config: cfg.clone(),
        seed: cfg.seed,
        next_rank_estimate,
        hit_layer_cap,
        mbp,
    })
}
