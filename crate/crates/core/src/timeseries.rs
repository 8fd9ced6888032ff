//! Raw multivariate series and the stacked-window representation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TiccError};

/// `T` sequential observations of an `n`-dimensional signal, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    data: Vec<f64>,
    len: usize,
    dim: usize,
}

impl TimeSeries {
    /// Build from row-major data. Rejects empty shapes and non-finite values.
    pub fn from_rows(data: Vec<f64>, len: usize, dim: usize) -> Result<Self> {
        if len == 0 || dim == 0 {
            return Err(TiccError::Empty("time series needs T >= 1 and n >= 1".into()));
        }
        if data.len() != len * dim {
            return Err(TiccError::Dimension(format!(
                "expected {} values for {len}x{dim}, got {}",
                len * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TiccError::NonFinite {
                row: pos / dim,
                column: pos % dim,
            });
        }
        Ok(Self { data, len, dim })
    }

    pub fn from_vecs(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(TiccError::RaggedRow {
                line: i + 1,
                expected: dim,
                found: r.len(),
            });
        }
        Self::from_rows(rows.concat(), rows.len(), dim)
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sensor dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len, self.dim, &self.data)
    }

    /// True when every column is constant over time.
    pub fn is_constant(&self) -> bool {
        let first = self.row(0);
        (1..self.len).all(|t| self.row(t) == first)
    }

    /// Serialize as headerless CSV using shortest round-trip float formatting.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 12);
        for t in 0..self.len {
            for (j, v) in self.row(t).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|source| TiccError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Parse CSV text: comma-separated decimals, optional single header line.
pub fn parse_csv(text: &str, has_header: bool) -> Result<TimeSeries> {
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if has_header && idx == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (col, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| TiccError::Parse {
                line: lineno,
                column: col + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(TiccError::NonFinite { row: rows, column: col });
            }
            data.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(TiccError::RaggedRow {
                    line: lineno,
                    expected: d,
                    found: count,
                })
            }
            _ => {}
        }
        rows += 1;
    }
    match dim {
        Some(d) => TimeSeries::from_rows(data, rows, d),
        None => Err(TiccError::Empty("csv contains no data rows".into())),
    }
}

pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TiccError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, has_header)
}

/// Row `t` is the window `[x_{t-w+1}, ..., x_t]` flattened to length `n*w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsequenceMatrix {
    rows: Vec<f64>,
    len: usize,
    dim: usize,
    window: usize,
}

impl SubsequenceMatrix {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sensor dimension `n`.
    pub fn sensors(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Row width `n*w`.
    pub fn width(&self) -> usize {
        self.dim * self.window
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let p = self.width();
        &self.rows[t * p..(t + 1) * p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

/// Stack sliding windows. Windows that would start before the first
/// observation are left-padded by repeating `x_1`.
pub fn stack_windows(ts: &TimeSeries, w: usize) -> Result<SubsequenceMatrix> {
    let t_len = ts.len();
    if w == 0 || w > t_len {
        return Err(TiccError::InvalidWindow { w, t: t_len });
    }
    let n = ts.dim();
    let mut rows = Vec::with_capacity(t_len * n * w);
    for t in 0..t_len {
        for lag in (0..w).rev() {
            let src = t.saturating_sub(lag);
            rows.extend_from_slice(ts.row(src));
        }
    }
    Ok(SubsequenceMatrix {
        rows,
        len: t_len,
        dim: n,
        window: w,
    })
}

/// Mean, biased covariance and size of a set of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

pub fn empirical_stats(subseq: &SubsequenceMatrix, members: &[usize]) -> Result<EmpiricalStats> {
    if members.is_empty() {
        return Err(TiccError::Empty("empirical stats of an empty member set".into()));
    }
    let p = subseq.width();
    let count = members.len();
    let mut mean = DVector::zeros(p);
    for &t in members {
        for (m, x) in mean.iter_mut().zip(subseq.row(t)) {
            *m += x;
        }
    }
    mean /= count as f64;

    // Upper triangle accumulated row by row, then mirrored.
    let mut acc = vec![0.0; p * p];
    let mut d = vec![0.0; p];
    for &t in members {
        for ((di, x), m) in d.iter_mut().zip(subseq.row(t)).zip(mean.iter()) {
            *di = x - m;
        }
        for i in 0..p {
            let di = d[i];
            let row = &mut acc[i * p..(i + 1) * p];
            for j in i..p {
                row[j] += di * d[j];
            }
        }
    }
    let scale = 1.0 / count as f64;
    let cov = DMatrix::from_fn(p, p, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        acc[a * p + b] * scale
    });
    Ok(EmpiricalStats { mean, cov, count })
}
