//! Reference implementations used to check the library against.
//!
//! Nothing here calls into the code under test except for plain data types.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Positions `(row, col)` of every distinct shared value in an `n·w` block
/// Toeplitz matrix, enumerated straight from the block layout.
pub fn toeplitz_groups(n: usize, w: usize) -> Vec<Vec<(usize, usize)>> {
    let mut groups = Vec::new();
    for m in 0..w {
        for i in 0..n {
            for j in 0..n {
                if m == 0 && j < i {
                    continue;
                }
                let mut pos = Vec::new();
                for a in 0..w - m {
                    let (r, c) = (a * n + i, (a + m) * n + j);
                    pos.push((r, c));
                    if r != c {
                        pos.push((c, r));
                    }
                }
                pos.sort_unstable();
                pos.dedup();
                groups.push(pos);
            }
        }
    }
    groups
}

fn build(p: usize, groups: &[Vec<(usize, usize)>], v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    for (g, &x) in groups.iter().zip(v) {
        for &(r, c) in g {
            m[(r, c)] = x;
        }
    }
    m
}

/// `-log det Θ + tr(SΘ)`, or `None` when Θ is not positive definite.
fn smooth_part(s: &DMatrix<f64>, theta: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let chol = theta.clone().cholesky()?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Some((-logdet + s.component_mul(theta).sum(), chol.inverse()))
}

/// `-log det Θ + tr(SΘ) + Σ λ_ij |Θ_ij|`.
pub fn glasso_objective(s: &DMatrix<f64>, lambda: &DMatrix<f64>, theta: &DMatrix<f64>) -> f64 {
    let (f, _) = smooth_part(s, theta).expect("objective needs a positive definite matrix");
    f + lambda.component_mul(&theta.abs()).sum()
}

/// Proximal gradient with backtracking over the free Toeplitz values.
/// Returns the minimizer and its objective.
pub fn proximal_gradient_oracle(
    s: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    n: usize,
    w: usize,
    iters: usize,
) -> (DMatrix<f64>, f64) {
    let p = n * w;
    let groups = toeplitz_groups(n, w);
    // the ℓ1 weight of a shared value is the sum of λ over its positions
    let weights: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&(r, c)| lambda[(r, c)]).sum())
        .collect();
    let mean_diag = s.diagonal().mean();
    let mut v: Vec<f64> = groups
        .iter()
        .map(|g| if g[0].0 == g[0].1 { 1.0 / (mean_diag + 1.0) } else { 0.0 })
        .collect();
    let mut step = 1.0;
    let (mut f, mut inv) = smooth_part(s, &build(p, &groups, &v)).unwrap();
    for _ in 0..iters {
        let grad: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().map(|&(r, c)| s[(r, c)] - inv[(r, c)]).sum())
            .collect();
        let mut accepted = None;
        for _ in 0..200 {
            let cand: Vec<f64> = v
                .iter()
                .zip(&grad)
                .zip(&weights)
                .map(|((x, g), wt)| {
                    let y = x - step * g;
                    y.signum() * (y.abs() - step * wt).max(0.0)
                })
                .collect();
            if let Some((fc, ic)) = smooth_part(s, &build(p, &groups, &cand)) {
                let d: Vec<f64> = cand.iter().zip(&v).map(|(a, b)| a - b).collect();
                let lin: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
                let quad: f64 = d.iter().map(|a| a * a).sum::<f64>() / (2.0 * step);
                if fc <= f + lin + quad {
                    accepted = Some((cand, fc, ic, quad * 2.0 * step));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, ic, moved_sq)) = accepted else {
            break;
        };
        v = cand;
        f = fc;
        inv = ic;
        step *= 1.25;
        if moved_sq == 0.0 {
            break;
        }
    }
    let theta = build(p, &groups, &v);
    let obj = glasso_objective(s, lambda, &theta);
    (theta, obj)
}

/// Sample covariance (biased) of `m` standard normal draws in `p` dimensions
/// mixed through a random matrix, so the instance has correlated variables.
pub fn random_covariance<R: Rng>(rng: &mut R, p: usize, m: usize) -> DMatrix<f64> {
    let mix = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let z = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = z * mix;
    x.transpose() * &x / m as f64
}

/// Path cost accumulated left to right: each step adds the switch penalty
/// (if any) and then the local cost.
pub fn path_cost(costs: &[Vec<f64>], path: &[usize], beta: f64) -> f64 {
    let mut total = 0.0;
    for (t, &l) in path.iter().enumerate() {
        if t > 0 && path[t - 1] != l {
            total += beta;
        }
        total += costs[t][l];
    }
    total
}

fn all_paths(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

/// Exhaustive minimum over all label paths, plus the path selected by the
/// documented tie rules: finish in the lowest-index best state; walking
/// backwards keep the current label when `β > 0` and staying is as good as
/// the best switch, otherwise step to the lowest-index best predecessor.
pub fn brute_force_assignment(costs: &[Vec<f64>], beta: f64) -> (f64, Vec<usize>) {
    let len = costs.len();
    let k = costs[0].len();
    // best[t][j]: cheapest prefix of length t+1 that ends in j, by enumeration
    let best: Vec<Vec<f64>> = (0..len)
        .map(|t| {
            let mut b = vec![f64::INFINITY; k];
            for p in all_paths(t + 1, k) {
                let c = path_cost(&costs[..=t], &p, beta);
                let last = p[t];
                if c < b[last] {
                    b[last] = c;
                }
            }
            b
        })
        .collect();
    let optimum = all_paths(len, k)
        .iter()
        .map(|p| path_cost(costs, p, beta))
        .fold(f64::INFINITY, f64::min);

    let lowest_min = |v: &[f64]| {
        let m = v.iter().copied().fold(f64::INFINITY, f64::min);
        v.iter().position(|&x| x == m).unwrap()
    };
    let mut path = vec![0; len];
    path[len - 1] = lowest_min(&best[len - 1]);
    for t in (1..len).rev() {
        let j = path[t];
        let via: Vec<f64> = (0..k)
            .map(|i| best[t - 1][i] + if i == j { 0.0 } else { beta })
            .collect();
        let m = via.iter().copied().fold(f64::INFINITY, f64::min);
        path[t - 1] = if beta > 0.0 && via[j] == m { j } else { lowest_min(&via) };
    }
    (optimum, path)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
