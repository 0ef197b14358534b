//! Elementwise activation N, its inverse and the derivatives used by the
//! layer gradient and matrix backpropagation.

use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;

/// Entries fed to the logit are clamped into `[DOMAIN_EPS, 1 - DOMAIN_EPS]`.
pub const DOMAIN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[default]
    Sigmoid,
    Identity,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(DOMAIN_EPS, 1.0 - DOMAIN_EPS)
}

impl ActivationKind {
    pub fn apply(self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            ActivationKind::Sigmoid => m.map(sigmoid),
            ActivationKind::Identity => m.clone(),
        }
    }

    pub fn derivative(self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            ActivationKind::Sigmoid => m.map(|x| {
                let s = sigmoid(x);
                s * (1.0 - s)
            }),
            ActivationKind::Identity => m.map(|_| 1.0),
        }
    }

    /// Maps an argument into the domain where [`inverse`](Self::inverse) is finite.
    pub fn clamp_domain(self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            ActivationKind::Sigmoid => m.map(clamp_unit),
            ActivationKind::Identity => m.clone(),
        }
    }

    pub fn inverse(self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            ActivationKind::Sigmoid => m.map(|x| {
                let x = clamp_unit(x);
                (x / (1.0 - x)).ln()
            }),
            ActivationKind::Identity => m.clone(),
        }
    }

    /// `d N⁻¹(x) / dx`, evaluated after clamping.
    pub fn inverse_derivative(self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            ActivationKind::Sigmoid => m.map(|x| {
                let x = clamp_unit(x);
                1.0 / (x * (1.0 - x))
            }),
            ActivationKind::Identity => m.map(|_| 1.0),
        }
    }
}
