//! Symmetric block-Toeplitz matrices.
//!
//! A matrix of `w x w` blocks, each `n x n`, where block `(r, c)` equals
//! `A(c - r)` above the diagonal and `A(r - c)^T` below it. Only the `w`
//! generating blocks are stored.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, TiccError};

/// Largest tolerated asymmetry in `A(0)` before construction fails.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative magnitude below which an entry is treated as a structural zero.
pub const SUPPORT_REL_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockToeplitzMatrix {
    n: usize,
    w: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl BlockToeplitzMatrix {
    /// Build from generating blocks `A(0)..A(w-1)`. `A(0)` is symmetrized.
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let w = blocks.len();
        if w == 0 {
            return Err(TiccError::Empty(
                "block Toeplitz matrix needs at least one block".into(),
            ));
        }
        let n = blocks[0].nrows();
        if n == 0 {
            return Err(TiccError::Empty("blocks must be non-empty".into()));
        }
        if let Some(m) = blocks.iter().position(|b| b.nrows() != n || b.ncols() != n) {
            return Err(TiccError::Dimension(format!("block {m} is not {n}x{n}")));
        }
        if blocks.iter().flat_map(|b| b.iter()).any(|v| !v.is_finite()) {
            return Err(TiccError::NonFinite { row: 0, column: 0 });
        }
        let a0 = &blocks[0];
        let scale = a0.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let asym = (a0 - a0.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(TiccError::Asymmetric(asym));
        }
        let mut blocks = blocks;
        blocks[0] = (&blocks[0] + blocks[0].transpose()) * 0.5;
        Ok(Self { n, w, blocks })
    }

    pub fn identity(n: usize, w: usize) -> Self {
        let mut blocks = vec![DMatrix::zeros(n, n); w];
        blocks[0] = DMatrix::identity(n, n);
        Self { n, w, blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Side length `n*w` of the assembled matrix.
    pub fn size(&self) -> usize {
        self.n * self.w
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, m: usize) -> &DMatrix<f64> {
        &self.blocks[m]
    }

    /// Value of the shared entry `(m, i, j)`.
    pub fn entry(&self, m: usize, i: usize, j: usize) -> f64 {
        self.blocks[m][(i, j)]
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let (n, w) = (self.n, self.w);
        let mut out = DMatrix::zeros(n * w, n * w);
        for r in 0..w {
            for c in 0..w {
                let (m, transpose) = if c >= r { (c - r, false) } else { (r - c, true) };
                let b = &self.blocks[m];
                for i in 0..n {
                    for j in 0..n {
                        out[(r * n + i, c * n + j)] = if transpose { b[(j, i)] } else { b[(i, j)] };
                    }
                }
            }
        }
        out
    }

    /// Scale every entry by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            w: self.w,
            blocks: self.blocks.iter().map(|b| b * s).collect(),
        }
    }

    /// Largest `|value|` over all entries that are not diagonal entries of `A(0)`.
    pub fn max_offdiag_abs(&self) -> f64 {
        self.unique_entries()
            .filter(|e| e.is_edge())
            .fold(0.0, |acc, e| acc.max(e.value.abs()))
    }

    /// The `n(n+1)/2 + (w-1)n^2` free entries, ordered by block then row-major.
    pub fn unique_entries(&self) -> impl Iterator<Item = UniqueEntry> + '_ {
        let n = self.n;
        (0..self.w).flat_map(move |m| {
            (0..n).flat_map(move |i| {
                let start = if m == 0 { i } else { 0 };
                (start..n).map(move |j| UniqueEntry {
                    block: m,
                    i,
                    j,
                    value: self.blocks[m][(i, j)],
                })
            })
        })
    }

    /// Off-diagonal entries whose magnitude exceeds the relative support
    /// threshold. These are the edges of the cluster's Markov random field.
    pub fn edge_support(&self) -> Vec<(usize, usize, usize)> {
        let thr = SUPPORT_REL_THRESHOLD * self.max_offdiag_abs();
        self.unique_entries()
            .filter(|e| e.is_edge() && e.value.abs() > thr)
            .map(|e| (e.block, e.i, e.j))
            .collect()
    }

    /// Number of free entries above the support threshold, diagonal included.
    pub fn nonzero_parameter_count(&self) -> usize {
        let thr = SUPPORT_REL_THRESHOLD * self.max_offdiag_abs();
        self.unique_entries().filter(|e| e.value.abs() > thr).count()
    }
}

/// One free parameter of a block-Toeplitz matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniqueEntry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

impl UniqueEntry {
    /// Diagonal entries of `A(0)` are node weights, everything else is an edge.
    pub fn is_edge(&self) -> bool {
        self.block > 0 || self.i != self.j
    }
}

#[derive(Serialize, Deserialize)]
struct BlockToeplitzWire {
    n: usize,
    w: usize,
    blocks: Vec<Vec<Vec<f64>>>,
}

impl Serialize for BlockToeplitzMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| (0..self.n).map(|i| b.row(i).iter().copied().collect()).collect())
            .collect();
        BlockToeplitzWire {
            n: self.n,
            w: self.w,
            blocks,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlockToeplitzMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let wire = BlockToeplitzWire::deserialize(d)?;
        if wire.blocks.len() != wire.w {
            return Err(D::Error::custom(format!(
                "expected {} blocks, found {}",
                wire.w,
                wire.blocks.len()
            )));
        }
        let mut blocks = Vec::with_capacity(wire.w);
        for (m, rows) in wire.blocks.iter().enumerate() {
            if rows.len() != wire.n || rows.iter().any(|r| r.len() != wire.n) {
                return Err(D::Error::custom(format!("block {m} is not {0}x{0}", wire.n)));
            }
            blocks.push(DMatrix::from_fn(wire.n, wire.n, |i, j| rows[i][j]));
        }
        BlockToeplitzMatrix::new(blocks).map_err(D::Error::custom)
    }
}

/// All positions of the assembled matrix that share entry `(i, j)` of `A(m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccurrenceSet {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub positions: Vec<(usize, usize)>,
}

impl OccurrenceSet {
    /// Occurrence count `R`.
    pub fn count(&self) -> usize {
        self.positions.len()
    }
}

/// Enumerate occurrence sets for an `(n, w)` layout: `A(0)` upper triangle
/// first, then each `A(m)` in row-major order. The position lists partition
/// the full `nw x nw` grid.
pub fn occurrence_sets(n: usize, w: usize) -> Vec<OccurrenceSet> {
    let mut sets = Vec::with_capacity(n * (n + 1) / 2 + w.saturating_sub(1) * n * n);
    for m in 0..w {
        for i in 0..n {
            let start = if m == 0 { i } else { 0 };
            for j in start..n {
                let mut positions = Vec::new();
                for r in 0..w - m {
                    let upper = (r * n + i, (r + m) * n + j);
                    let lower = (upper.1, upper.0);
                    if upper == lower {
                        positions.push(upper);
                    } else {
                        positions.push(lower);
                        positions.push(upper);
                    }
                }
                sets.push(OccurrenceSet {
                    block: m,
                    i,
                    j,
                    positions,
                });
            }
        }
    }
    sets
}

/// Rebuild a block-Toeplitz matrix from one value per occurrence set.
pub fn from_set_values(n: usize, w: usize, sets: &[OccurrenceSet], values: &[f64]) -> BlockToeplitzMatrix {
    debug_assert_eq!(sets.len(), values.len());
    let mut blocks = vec![DMatrix::zeros(n, n); w];
    for (set, &v) in sets.iter().zip(values) {
        blocks[set.block][(set.i, set.j)] = v;
        if set.block == 0 {
            blocks[0][(set.j, set.i)] = v;
        }
    }
    BlockToeplitzMatrix { n, w, blocks }
}

/// Frobenius projection onto symmetric block-Toeplitz matrices: every shared
/// entry becomes the mean of its occurrence set. Inputs that are already block
/// Toeplitz are reproduced exactly.
pub fn nearest_toeplitz(m: &DMatrix<f64>, n: usize, w: usize) -> Result<BlockToeplitzMatrix> {
    if n == 0 || w == 0 || m.nrows() != n * w || m.ncols() != n * w {
        return Err(TiccError::Dimension(format!(
            "matrix is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            n * w,
            n * w
        )));
    }
    let sets = occurrence_sets(n, w);
    let values: Vec<f64> = sets.iter().map(|s| set_mean(m, s)).collect();
    Ok(from_set_values(n, w, &sets, &values))
}

fn set_mean(m: &DMatrix<f64>, set: &OccurrenceSet) -> f64 {
    let first = m[set.positions[0]];
    if set.positions.iter().all(|&p| m[p] == first) {
        return first;
    }
    set.positions.iter().map(|&p| m[p]).sum::<f64>() / set.count() as f64
}
