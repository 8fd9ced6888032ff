//! Synthetic ground-truth datasets.
//!
//! Each cluster gets a random sparse block-Toeplitz precision built from
//! Erdős–Rényi edge patterns, shifted so its smallest eigenvalue is at least
//! 0.1. Series are sampled one observation at a time from the conditional
//! Gaussian of the newest observation given the previous `w - 1`, under the
//! window distribution `N(0, Θ⁻¹)` of the active segment. The conditioning
//! history carries across segment boundaries.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TiccError};
use crate::timeseries::TimeSeries;
use crate::toeplitz::BlockToeplitzMatrix;

/// PRNG used for every random draw in the crate.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64, stream-separated";

/// Named temporal sequences (1-based cluster ids as written).
pub const PRESETS: &[&str] = &["1,2,1", "1,2,3,2,1", "1,2,3,4,1,2,3,4", "1,2,2,1,3,3,3,1"];

const THETA_STREAM: u64 = 1;
const SEQUENCE_STREAM: u64 = 2;

/// Seeded generator on an independent stream.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A generated dataset: true precisions, labels, series and the segment list.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub thetas: Vec<BlockToeplitzMatrix>,
    pub labels: Vec<usize>,
    pub series: TimeSeries,
    pub segment_spec: Vec<(usize, usize)>,
}

impl GroundTruth {
    pub fn clusters(&self) -> usize {
        self.thetas.len()
    }
}

/// Parse a preset name such as `"1,2,1"` into 0-based cluster ids.
pub fn parse_sequence(name: &str) -> Result<Vec<usize>> {
    if !PRESETS.contains(&name) {
        return Err(TiccError::Config(format!(
            "unknown preset {name:?}; valid presets: {}",
            PRESETS
                .iter()
                .map(|p| format!("\"{p}\""))
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    Ok(name.split(',').map(|c| c.parse::<usize>().unwrap() - 1).collect())
}

/// Segment list for a preset; defaults to `100·K` samples per segment.
pub fn preset_segments(name: &str, per_segment: Option<usize>) -> Result<Vec<(usize, usize)>> {
    let seq = parse_sequence(name)?;
    let k = distinct_clusters(&seq);
    let len = per_segment.unwrap_or(100 * k);
    Ok(seq.into_iter().map(|c| (c, len)).collect())
}

fn distinct_clusters(ids: &[usize]) -> usize {
    ids.iter().max().map_or(0, |m| m + 1)
}

/// Weight of a selected edge: uniform on `[-1, -0.25] ∪ [0.25, 1]`.
fn edge_weight<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mag = rng.random_range(0.25..=1.0);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

pub fn random_toeplitz_precision(n: usize, w: usize, p_edge: f64, seed: u64) -> Result<BlockToeplitzMatrix> {
    random_toeplitz_precision_with(n, w, p_edge, &mut rng_for(seed, THETA_STREAM))
}

/// Random sparse precision with minimum eigenvalue at least 0.1. `A(0)` uses
/// one draw per unordered pair; `A(m≥1)` draws every ordered pair, self-lags
/// included.
pub fn random_toeplitz_precision_with<R: Rng + ?Sized>(
    n: usize,
    w: usize,
    p_edge: f64,
    rng: &mut R,
) -> Result<BlockToeplitzMatrix> {
    if n == 0 || w == 0 {
        return Err(TiccError::Config("n and w must be positive".into()));
    }
    if !(p_edge > 0.0 && p_edge < 1.0) {
        return Err(TiccError::Config(format!(
            "edge probability must be in (0, 1), got {p_edge}"
        )));
    }
    let mut blocks = vec![DMatrix::zeros(n, n); w];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p_edge) {
                let v = edge_weight(rng);
                blocks[0][(i, j)] = v;
                blocks[0][(j, i)] = v;
            }
        }
    }
    for block in blocks.iter_mut().skip(1) {
        for i in 0..n {
            for j in 0..n {
                if rng.random_bool(p_edge) {
                    block[(i, j)] = edge_weight(rng);
                }
            }
        }
    }
    let g = BlockToeplitzMatrix::new(blocks)?;
    let c = g.assemble().symmetric_eigenvalues().min();
    let mut blocks = g.blocks().to_vec();
    for i in 0..n {
        blocks[0][(i, i)] += 0.1 + c.abs();
    }
    BlockToeplitzMatrix::new(blocks)
}

/// Conditional law of the newest observation given `h` predecessors.
struct Conditional {
    /// `Σ₂₁ Σ₁₁⁻¹`, `n x hn`.
    gain: DMatrix<f64>,
    /// Lower Cholesky factor of `Σ₂₂ - Σ₂₁ Σ₁₁⁻¹ Σ₁₂`.
    chol: DMatrix<f64>,
}

/// Conditionals for every history length `0..w`, using the trailing `(h+1)n`
/// coordinates of the window covariance.
fn conditionals(theta: &BlockToeplitzMatrix) -> Result<Vec<Conditional>> {
    let (n, w) = (theta.n(), theta.w());
    let sigma = theta
        .assemble()
        .cholesky()
        .ok_or_else(|| TiccError::NotPositiveDefinite("generator precision".into()))?
        .inverse();
    let cur = (w - 1) * n;
    let s22 = sigma.view((cur, cur), (n, n)).into_owned();
    (0..w)
        .map(|h| {
            let (gain, cov) = if h == 0 {
                (DMatrix::zeros(n, 0), s22.clone())
            } else {
                let start = (w - 1 - h) * n;
                let s11 = sigma.view((start, start), (h * n, h * n)).into_owned();
                let s12 = sigma.view((start, cur), (h * n, n)).into_owned();
                let chol11 = s11
                    .cholesky()
                    .ok_or_else(|| TiccError::NotPositiveDefinite("past-block covariance".into()))?;
                let gain = chol11.solve(&s12).transpose();
                let cov = &s22 - &gain * &s12;
                (gain, cov)
            };
            let cov = (&cov + cov.transpose()) * 0.5;
            let chol = cov
                .cholesky()
                .ok_or_else(|| TiccError::NotPositiveDefinite("conditional covariance".into()))?
                .l();
            Ok(Conditional { gain, chol })
        })
        .collect()
}

pub fn generate_sequence(
    segment_spec: &[(usize, usize)],
    thetas: &[BlockToeplitzMatrix],
    seed: u64,
) -> Result<GroundTruth> {
    generate_sequence_with(segment_spec, thetas, &mut rng_for(seed, SEQUENCE_STREAM))
}

pub fn generate_sequence_with<R: Rng + ?Sized>(
    segment_spec: &[(usize, usize)],
    thetas: &[BlockToeplitzMatrix],
    rng: &mut R,
) -> Result<GroundTruth> {
    if segment_spec.is_empty() {
        return Err(TiccError::Empty("segment spec is empty".into()));
    }
    let first = thetas
        .first()
        .ok_or_else(|| TiccError::Empty("no cluster precisions given".into()))?;
    let (n, w) = (first.n(), first.w());
    if thetas.iter().any(|t| t.n() != n || t.w() != w) {
        return Err(TiccError::Dimension("all precisions must share (n, w)".into()));
    }
    for &(c, len) in segment_spec {
        if c >= thetas.len() {
            return Err(TiccError::Config(format!(
                "segment refers to cluster {c} without a precision"
            )));
        }
        if len == 0 {
            return Err(TiccError::Config("segment lengths must be at least 1".into()));
        }
    }
    let conds = thetas.iter().map(conditionals).collect::<Result<Vec<_>>>()?;

    let total: usize = segment_spec.iter().map(|s| s.1).sum();
    let mut data = Vec::with_capacity(total * n);
    let mut labels = Vec::with_capacity(total);
    for &(c, len) in segment_spec {
        for _ in 0..len {
            let t = labels.len();
            let h = t.min(w - 1);
            let cond = &conds[c][h];
            let past = DVector::from_column_slice(&data[(t - h) * n..t * n]);
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &cond.gain * past + &cond.chol * z;
            data.extend(x.iter());
            labels.push(c);
        }
    }
    Ok(GroundTruth {
        thetas: thetas.to_vec(),
        labels,
        series: TimeSeries::from_rows(data, total, n)?,
        segment_spec: segment_spec.to_vec(),
    })
}

/// Generate precisions for every cluster in `segment_spec`, then the series.
pub fn generate(segment_spec: &[(usize, usize)], n: usize, w: usize, p_edge: f64, seed: u64) -> Result<GroundTruth> {
    let k = distinct_clusters(&segment_spec.iter().map(|s| s.0).collect::<Vec<_>>());
    let mut theta_rng = rng_for(seed, THETA_STREAM);
    let thetas = (0..k)
        .map(|_| random_toeplitz_precision_with(n, w, p_edge, &mut theta_rng))
        .collect::<Result<Vec<_>>>()?;
    generate_sequence(segment_spec, &thetas, seed)
}

pub fn generate_preset(
    name: &str,
    n: usize,
    w: usize,
    p_edge: f64,
    per_segment: Option<usize>,
    seed: u64,
) -> Result<GroundTruth> {
    generate(&preset_segments(name, per_segment)?, n, w, p_edge, seed)
}
