//! Reference implementations used as test oracles. They follow textbook
//! definitions directly and share no code with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weights drawn uniformly from the open interval (0, 1).
pub fn open_unit_weights(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m)
        .map(|_| loop {
            let w: f64 = rng.random();
            if w > 0.0 {
                break w;
            }
        })
        .collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Index of the half-open knot interval holding `x`; the right end of the
/// domain belongs to the last nonempty interval.
fn interval(t: &[f64], p: usize, x: f64) -> usize {
    let n = t.len() - p - 1;
    if x >= t[n] {
        let mut mu = n - 1;
        while t[mu] == t[mu + 1] {
            mu -= 1;
        }
        return mu;
    }
    (0..t.len() - 1)
        .find(|&i| t[i] <= x && x < t[i + 1])
        .expect("x inside the knot range")
}

/// `N_{i,p}(x)` by the Cox–de Boor recursion; `mu` is the knot interval
/// holding `x`.
fn bspline(t: &[f64], i: usize, p: usize, x: f64, mu: usize) -> f64 {
    if p == 0 {
        return if i == mu { 1.0 } else { 0.0 };
    }
    ratio(x - t[i], t[i + p] - t[i]) * bspline(t, i, p - 1, x, mu)
        + ratio(t[i + p + 1] - x, t[i + p + 1] - t[i + 1]) * bspline(t, i + 1, p - 1, x, mu)
}

/// `r`-th derivative of `N_{i,p}` by differentiating the recursion.
fn bspline_derivative(t: &[f64], i: usize, p: usize, x: f64, r: usize, mu: usize) -> f64 {
    if r == 0 {
        return bspline(t, i, p, x, mu);
    }
    if p == 0 {
        return 0.0;
    }
    let pf = p as f64;
    ratio(pf, t[i + p] - t[i]) * bspline_derivative(t, i, p - 1, x, r - 1, mu)
        - ratio(pf, t[i + p + 1] - t[i + 1]) * bspline_derivative(t, i + 1, p - 1, x, r - 1, mu)
}

/// All `n` basis values (or `r`-th derivatives) of degree `p` at `x`.
pub fn basis_row(t: &[f64], p: usize, x: f64, r: usize) -> Vec<f64> {
    let mu = interval(t, p, x);
    let n = t.len() - p - 1;
    (0..n)
        .map(|i| bspline_derivative(t, i, p, x, r, mu))
        .collect()
}

/// Monomial basis `1, x, …, x^p` (or its `r`-th derivative).
pub fn monomial_row(p: usize, x: f64, r: usize) -> Vec<f64> {
    (0..=p)
        .map(|k| {
            if k < r {
                0.0
            } else {
                let c: f64 = ((k - r + 1)..=k).map(|v| v as f64).product();
                c * x.powi((k - r) as i32)
            }
        })
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows[0].len();
    DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

/// Weighted least squares through the normal equations, solved by LU.
pub fn normal_equations(b: &DMatrix<f64>, w: &[f64], f: &[f64]) -> DVector<f64> {
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let g = b.transpose() * &wm * b;
    let rhs = b.transpose() * &wm * DVector::from_column_slice(f);
    g.lu().solve(&rhs).expect("nonsingular normal equations")
}

/// All `k`-subsets of `0..m` in lexicographic order.
pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            go(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// A square minor counts as singular when its determinant falls below
/// `1e-12` times the product of its row max-norms.
pub fn minor_is_singular(bk: &DMatrix<f64>) -> bool {
    let scale: f64 = bk.row_iter().map(|r| r.amax()).product();
    bk.determinant().abs() < 1e-12 * scale
}

/// Convex combination of subset interpolants, evaluated through `eval_rows`
/// (the basis rows at the evaluation point). Subsets all contain `fixed`;
/// the remaining indices are drawn from the other points. Returns
/// `(value, Σλ)` per evaluation row.
pub fn brute_force_combination(
    b: &DMatrix<f64>,
    w: &[f64],
    f: &[f64],
    fixed: &[usize],
    eval_rows: &[Vec<f64>],
) -> (Vec<f64>, f64) {
    let (m, n) = b.shape();
    let free: Vec<usize> = (0..m).filter(|i| !fixed.contains(i)).collect();
    let mut num = vec![0.0; eval_rows.len()];
    let mut den = 0.0;
    for k in subsets(free.len(), n - fixed.len()) {
        let mut idx: Vec<usize> = fixed.to_vec();
        idx.extend(k.iter().map(|&j| free[j]));
        let bk = b.select_rows(&idx);
        if minor_is_singular(&bk) {
            continue;
        }
        let det = bk.determinant();
        let omega: f64 = k.iter().map(|&j| w[free[j]]).product();
        let lambda = omega * det * det;
        let fk = DVector::from_iterator(idx.len(), idx.iter().map(|&i| f[i]));
        let c = bk.lu().solve(&fk).expect("nonsingular minor");
        for (acc, row) in num.iter_mut().zip(eval_rows) {
            *acc += lambda * row.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        den += lambda;
    }
    (num.into_iter().map(|v| v / den).collect(), den)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// The seven observations used throughout the decomposition checks.
pub const SEVEN_X: [f64; 7] = [-4.5, -3.5, -2.2, -1.2, 0.8, 2.2, 4.0];
pub const SEVEN_F: [f64; 7] = [-2.0, 0.0, -1.0, 2.8, 2.9, 0.5, -2.0];
pub const SEVEN_KNOTS: [f64; 8] = [-5.0, -5.0, -5.0, -5.0 / 3.0, 5.0 / 3.0, 5.0, 5.0, 5.0];
