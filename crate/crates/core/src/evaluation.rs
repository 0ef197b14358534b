//! Component similarity: Pearson correlation, Hausdorff distance between
//! thresholded maps, greedy matching and split-half reproducibility.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decomposer::{components, decompose, DemandConfig};
use crate::error::{DemandError, Result};
use crate::matrix::DenseMatrix;

/// Number of standard deviations above the mean absolute value at which a
/// map entry counts as active.
pub const DEFAULT_ACTIVE_SDS: f64 = 1.0;

/// Pearson correlation; 0 when either vector has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DemandError::shape("pearson", (1, a.len()), (1, b.len())));
    }
    if a.len() < 2 {
        return Err(DemandError::Degenerate(format!(
            "pearson needs at least 2 samples, got {}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Indices whose absolute value exceeds `mean + sds · std` of the map's
/// absolute values.
pub fn active_set(map: &[f64], sds: f64) -> Vec<usize> {
    if map.is_empty() {
        return Vec::new();
    }
    let n = map.len() as f64;
    let mean = map.iter().map(|x| x.abs()).sum::<f64>() / n;
    let sd = (map.iter().map(|x| (x.abs() - mean).powi(2)).sum::<f64>() / n).sqrt();
    let cut = mean + sds * sd;
    map.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > cut)
        .map(|(i, _)| i)
        .collect()
}

/// Symmetric Hausdorff distance between two sorted index sets. `None` if
/// either is empty.
pub fn hausdorff_sets(a: &[usize], b: &[usize]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    fn directed(from: &[usize], to: &[usize]) -> usize {
        let mut worst = 0;
        for &x in from {
            // `to` is sorted: nearest neighbour is at the insertion point or just before
            let p = to.partition_point(|&y| y < x);
            let mut best = usize::MAX;
            if p < to.len() {
                best = best.min(to[p] - x);
            }
            if p > 0 {
                best = best.min(x - to[p - 1]);
            }
            worst = worst.max(best);
        }
        worst
    }
    Some(directed(a, b).max(directed(b, a)) as f64)
}

/// Hausdorff distance between the active sets of two maps, using
/// [`DEFAULT_ACTIVE_SDS`]. Returns the map length if either set is empty.
pub fn hausdorff(a: &[f64], b: &[f64]) -> Result<f64> {
    hausdorff_with(a, b, DEFAULT_ACTIVE_SDS)
}

pub fn hausdorff_with(a: &[f64], b: &[f64], sds: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DemandError::shape("hausdorff", (1, a.len()), (1, b.len())));
    }
    let sa = active_set(a, sds);
    let sb = active_set(b, sds);
    Ok(hausdorff_sets(&sa, &sb).unwrap_or(a.len() as f64))
}

/// Component maps stored as matrix rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub maps: DenseMatrix,
    pub labels: Option<Vec<String>>,
}

impl ComponentSet {
    pub fn new(maps: DenseMatrix) -> Self {
        Self { maps, labels: None }
    }

    pub fn with_labels(maps: DenseMatrix, labels: Vec<String>) -> Result<Self> {
        if labels.len() != maps.rows() {
            return Err(DemandError::Input(format!(
                "{} labels for {} components",
                labels.len(),
                maps.rows()
            )));
        }
        Ok(Self {
            maps,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.maps.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.rows() == 0
    }

    pub fn map(&self, i: usize) -> &[f64] {
        self.maps.row(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    /// Signed Pearson correlation of the pair.
    pub corr: f64,
    pub hausdorff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

impl Matching {
    pub fn mean_abs_corr(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(|p| p.corr.abs()).sum::<f64>() / self.pairs.len() as f64
    }

    pub fn total_abs_corr(&self) -> f64 {
        self.pairs.iter().map(|p| p.corr.abs()).sum()
    }

    pub fn mean_hausdorff(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(|p| p.hausdorff).sum::<f64>() / self.pairs.len() as f64
    }
}

/// Which score drives the greedy pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMetric {
    /// Largest |Pearson| first.
    Correlation,
    /// Smallest Hausdorff distance first.
    Hausdorff,
}

/// Greedy maximum-|Pearson| pairing without replacement.
pub fn match_components(a: &ComponentSet, b: &ComponentSet) -> Result<Matching> {
    match_components_by(a, b, MatchMetric::Correlation)
}

pub fn match_components_by(a: &ComponentSet, b: &ComponentSet, metric: MatchMetric) -> Result<Matching> {
    if a.is_empty() || b.is_empty() {
        return Err(DemandError::Input("component sets must be nonempty".into()));
    }
    if a.maps.cols() != b.maps.cols() {
        return Err(DemandError::shape("match_components", a.maps.shape(), b.maps.shape()));
    }
    let (na, nb) = (a.len(), b.len());
    let mut corr = vec![0.0; na * nb];
    let mut haus = vec![0.0; na * nb];
    for i in 0..na {
        for j in 0..nb {
            corr[i * nb + j] = pearson(a.map(i), b.map(j))?;
            haus[i * nb + j] = hausdorff(a.map(i), b.map(j))?;
        }
    }
    let score = |k: usize| match metric {
        MatchMetric::Correlation => corr[k].abs(),
        MatchMetric::Hausdorff => -haus[k],
    };

    let mut used_a = vec![false; na];
    let mut used_b = vec![false; nb];
    let mut pairs = Vec::with_capacity(na.min(nb));
    for _ in 0..na.min(nb) {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..na).filter(|&i| !used_a[i]) {
            for j in (0..nb).filter(|&j| !used_b[j]) {
                let s = score(i * nb + j);
                if best.is_none_or(|(bs, _, _)| s > bs) {
                    best = Some((s, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("an unused pair remains");
        used_a[i] = true;
        used_b[j] = true;
        pairs.push(MatchedPair {
            a: i,
            b: j,
            corr: corr[i * nb + j],
            hausdorff: haus[i * nb + j],
        });
    }
    let unused = |used: &[bool]| used.iter().enumerate().filter(|(_, &u)| !u).map(|(i, _)| i).collect();
    Ok(Matching {
        pairs,
        unmatched_a: unused(&used_a),
        unmatched_b: unused(&used_b),
    })
}

/// Disjoint halves of `0..rows`, each sorted. The first half gets the
/// smaller share when `rows` is odd.
pub fn split_rows(rows: usize, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let mut first = idx[..rows / 2].to_vec();
    let mut second = idx[rows / 2..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproducibilityReport {
    pub half_a: Vec<usize>,
    pub half_b: Vec<usize>,
    pub rank_a: usize,
    pub rank_b: usize,
    pub matching: Matching,
    pub mean_abs_corr: f64,
}

/// Splits the rows of `input` at random into two halves, decomposes both
/// and matches their first-layer components.
pub fn reproducibility(input: &DenseMatrix, cfg: &DemandConfig, split_seed: u64) -> Result<ReproducibilityReport> {
    if input.rows() < 4 {
        return Err(DemandError::Input(format!(
            "reproducibility needs at least 4 rows, got {}",
            input.rows()
        )));
    }
    cfg.validate()?;
    let (half_a, half_b) = split_rows(input.rows(), split_seed);
    let part_a = input.select_rows(&half_a)?;
    let part_b = input.select_rows(&half_b)?;

    let (res_a, res_b) = std::thread::scope(|s| {
        let ha = s.spawn(|| decompose(&part_a, cfg));
        let hb = s.spawn(|| decompose(&part_b, cfg));
        (
            ha.join().expect("decomposition thread panicked"),
            hb.join().expect("decomposition thread panicked"),
        )
    });
    let (res_a, res_b) = (res_a?, res_b?);

    let ca = ComponentSet::new(components(&res_a, 1)?);
    let cb = ComponentSet::new(components(&res_b, 1)?);
    let matching = match_components(&ca, &cb)?;
    Ok(ReproducibilityReport {
        rank_a: res_a.layers[0].rank,
        rank_b: res_b.layers[0].rank,
        mean_abs_corr: matching.mean_abs_corr(),
        matching,
        half_a,
        half_b,
    })
}
