//! Seeded hierarchical test data with known factors.
//!
//! The deepest features are disjoint contiguous blocks of ones that tile the
//! columns. Going up, `Y_k = X_{k+1}·F_{k+1}` where `F` is the block matrix
//! at the deepest level and `σ(Y_{k+1})` above it. The input is
//! `X_1·Y_1 + S + noise`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{DemandError, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub ranks: Vec<usize>,
    pub noise_sigma: f64,
    pub s_density: f64,
    pub s_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rows: 100,
            cols: 400,
            ranks: vec![8, 3],
            noise_sigma: 0.01,
            s_density: 0.02,
            s_amplitude: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DemandError::Parameter(msg));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("rows and cols must be positive, got {}x{}", self.rows, self.cols));
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return bad(format!("ranks must be a nonempty list of positive values, got {:?}", self.ranks));
        }
        if self.ranks.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("ranks must be strictly decreasing, got {:?}", self.ranks));
        }
        if self.ranks[0] >= self.rows.min(self.cols) {
            return bad(format!(
                "first rank {} must be below min(rows, cols) = {}",
                self.ranks[0],
                self.rows.min(self.cols)
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.s_density) {
            return bad(format!("s_density must lie in [0, 1), got {}", self.s_density));
        }
        if !self.s_amplitude.is_finite() {
            return bad(format!("s_amplitude must be finite, got {}", self.s_amplitude));
        }
        Ok(())
    }

    pub fn spike_count(&self) -> usize {
        (self.s_density * (self.rows * self.cols) as f64).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `X_1 … X_M`; `X_1` is `rows × ranks[0]`.
    pub x_list: Vec<DenseMatrix>,
    /// `Y_1 … Y_M`; the last entry holds the block features.
    pub y_list: Vec<DenseMatrix>,
    pub s_true: DenseMatrix,
    /// `X_1·Y_1` before spikes and noise.
    pub signal: DenseMatrix,
}

/// Column range `[start, end)` of block `j` out of `r` over `m` columns.
pub fn block_range(j: usize, r: usize, m: usize) -> (usize, usize) {
    let width = m / r;
    let start = j * width;
    let end = if j + 1 == r { m } else { start + width };
    (start, end)
}

fn block_features(r: usize, m: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r, m, |j, c| {
        let (s, e) = block_range(j, r, m);
        if (s..e).contains(&c) {
            1.0
        } else {
            0.0
        }
    })
    .expect("positive dims")
}

pub fn generate(spec: &SynthSpec) -> Result<(DenseMatrix, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (t, m) = (spec.rows, spec.cols);
    let depth = spec.ranks.len();
    let dims: Vec<usize> = std::iter::once(t).chain(spec.ranks.iter().copied()).collect();

    // weights are drawn deepest first
    let mut x_list = vec![DenseMatrix::zeros(1, 1); depth];
    for k in (0..depth).rev() {
        let scale = 1.0 / (dims[k + 1] as f64).sqrt();
        x_list[k] =
            DenseMatrix::from_fn(dims[k], dims[k + 1], |_, _| rng.sample::<f64, _>(StandardNormal) * scale)?;
    }

    let mut y_list = vec![DenseMatrix::zeros(1, 1); depth];
    y_list[depth - 1] = block_features(spec.ranks[depth - 1], m);
    for k in (0..depth - 1).rev() {
        let below = if k + 1 == depth - 1 {
            y_list[k + 1].clone()
        } else {
            ActivationKind::Sigmoid.apply(&y_list[k + 1])
        };
        y_list[k] = x_list[k + 1].matmul(&below)?;
    }
    let signal = x_list[0].matmul(&y_list[0])?;

    let mut spikes = vec![0.0; t * m];
    for idx in rand::seq::index::sample(&mut rng, t * m, spec.spike_count()) {
        spikes[idx] = if rng.random_bool(0.5) {
            spec.s_amplitude
        } else {
            -spec.s_amplitude
        };
    }
    let s_true = DenseMatrix::new(t, m, spikes)?;

    let mut data = signal.add(&s_true)?.into_vec();
    if spec.noise_sigma > 0.0 {
        for v in &mut data {
            *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let input = DenseMatrix::new(t, m, data)?;
    Ok((
        input,
        GroundTruth {
            x_list,
            y_list,
            s_true,
            signal,
        },
    ))
}
