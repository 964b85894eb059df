//! Weighted and penalized weighted least-squares solvers, thin-plate energy
//! assembly and pointwise error metrics.

use nalgebra::DMatrix;

use crate::cloud::WeightedPointCloud;
use crate::error::{Error, Result};
use crate::spline::{Basis, SplineFunction};

/// Relative pivot magnitude below which a system is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Collocation matrix stored row by row as `(column, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDesign {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseDesign {
    pub fn from_basis<'a, S, I>(space: &S, sites: I) -> Result<Self>
    where
        S: Basis + ?Sized,
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows = sites
            .into_iter()
            .map(|x| {
                space
                    .eval_basis(x)
                    .map(|r| r.into_iter().filter(|&(_, v)| v != 0.0).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ncols: space.dim(),
            rows,
        })
    }

    pub fn from_dense(b: &DMatrix<f64>) -> Self {
        let rows = b
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self {
            ncols: b.ncols(),
            rows,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.nrows(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                b[(i, j)] = v;
            }
        }
        b
    }

    /// `Bᵀ W B`.
    pub fn weighted_gram(&self, weights: &[f64]) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.ncols, self.ncols);
        for (row, &w) in self.rows.iter().zip(weights) {
            for &(j, bj) in row {
                let wj = w * bj;
                for &(l, bl) in row {
                    g[(j, l)] += wj * bl;
                }
            }
        }
        g
    }

    /// `Bᵀ W f`.
    pub fn weighted_rhs(&self, weights: &[f64], f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.ncols, f.ncols());
        for (i, (row, &w)) in self.rows.iter().zip(weights).enumerate() {
            for &(j, bj) in row {
                for k in 0..f.ncols() {
                    r[(j, k)] += w * bj * f[(i, k)];
                }
            }
        }
        r
    }

    /// `B c` as an `m × D` matrix.
    pub fn apply(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), c.ncols());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                for k in 0..c.ncols() {
                    out[(i, k)] += v * c[(j, k)];
                }
            }
        }
        out
    }
}

fn check_shapes(m: usize, n: usize, weights: &[f64], f: &DMatrix<f64>) -> Result<()> {
    if weights.len() != m || f.nrows() != m {
        return Err(Error::Dimension(format!(
            "{m} rows, {} weights, {} value rows",
            weights.len(),
            f.nrows()
        )));
    }
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "least squares needs n <= m (n = {n}, m = {m})"
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    Ok(())
}

/// Minimizes `Σ ω_i ‖(B c)_i − f_i‖²` through a Householder QR of `W^{1/2} B`.
///
/// Rows are processed in order of decreasing weight, which keeps the
/// factorization accurate when weights span many orders of magnitude.
pub fn solve_wls(b: &DMatrix<f64>, weights: &[f64], f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = b.shape();
    check_shapes(m, n, weights, f)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]).then(i.cmp(&j)));
    let mut a = DMatrix::zeros(m, n);
    let mut rhs = DMatrix::zeros(m, f.ncols());
    for (r, &i) in order.iter().enumerate() {
        let s = weights[i].sqrt();
        a.row_mut(r).copy_from(&(b.row(i) * s));
        rhs.row_mut(r).copy_from(&(f.row(i) * s));
    }
    let qr = a.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if !(diag_max > 0.0)
        || r.diagonal()
            .iter()
            .any(|d| d.abs() < RANK_TOLERANCE * diag_max)
    {
        return Err(Error::RankDeficient);
    }
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, n).into_owned();
    r.solve_upper_triangular(&top).ok_or(Error::RankDeficient)
}

/// Symmetric thin-plate energy matrix `P` with `cᵀ P c = J(Σ c_j β_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix(pub DMatrix<f64>);

impl PenaltyMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Energy `Σ_k c_kᵀ P c_k` summed over the value components.
    pub fn energy(&self, coefficients: &DMatrix<f64>) -> f64 {
        coefficients
            .column_iter()
            .map(|c| c.dot(&(&self.0 * c)))
            .sum()
    }
}

/// Spaces that can be cut into axis-aligned cells on which every basis
/// function is a single polynomial piece.
pub trait Tessellated: Basis {
    fn integration_cells(&self) -> Vec<Vec<(f64, f64)>>;
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Second-order multi-indices with their multinomial factors.
fn second_order_terms(dim: usize) -> Vec<(Vec<usize>, f64)> {
    let mut terms = Vec::new();
    for a in 0..dim {
        for b in a..dim {
            let mut alpha = vec![0; dim];
            alpha[a] += 1;
            alpha[b] += 1;
            terms.push((alpha, if a == b { 1.0 } else { 2.0 }));
        }
    }
    terms
}

/// Assembles `P[j][l] = ∫ Σ_{|α|=2} binom(2, α) ∂^α β_j ∂^α β_l` by per-cell
/// Gauss–Legendre quadrature with `max degree + 1` points per direction.
pub fn assemble_thin_plate<S: Tessellated + ?Sized>(space: &S) -> Result<PenaltyMatrix> {
    let degrees = space.degrees();
    if let Some(&d) = degrees.iter().find(|&&d| d < 2) {
        return Err(Error::InvalidArgument(format!(
            "thin-plate energy needs degree >= 2 in every direction, got {d}"
        )));
    }
    let dim = space.param_dim();
    let q = degrees.iter().max().copied().unwrap_or(2) + 1;
    let (nodes, qw) = gauss_legendre(q);
    let terms = second_order_terms(dim);
    let n = space.dim();
    let mut p = DMatrix::zeros(n, n);
    let mut point = vec![0.0; dim];
    let mut idx = vec![0usize; dim];
    for cell in space.integration_cells() {
        let jac: f64 = cell.iter().map(|(lo, hi)| 0.5 * (hi - lo)).product();
        if jac == 0.0 {
            continue;
        }
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            let mut w = jac;
            for d in 0..dim {
                let (lo, hi) = cell[d];
                point[d] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes[idx[d]];
                w *= qw[idx[d]];
            }
            for (alpha, factor) in &terms {
                let vals = space.eval_basis_derivatives(&point, alpha)?;
                for &(j, vj) in &vals {
                    if vj == 0.0 {
                        continue;
                    }
                    let s = w * factor * vj;
                    for &(l, vl) in &vals {
                        p[(j, l)] += s * vl;
                    }
                }
            }
            // odometer over quadrature points
            let mut d = 0;
            while d < dim {
                idx[d] += 1;
                if idx[d] < q {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dim {
                break;
            }
        }
    }
    Ok(PenaltyMatrix(p))
}

/// Solves `(½ Bᵀ W B + λ P) c = ½ Bᵀ W f` by Cholesky factorization.
///
/// `λ = 0` delegates to [`solve_wls`].
pub fn solve_penalized_wls(
    b: &DMatrix<f64>,
    weights: &[f64],
    f: &DMatrix<f64>,
    penalty: &PenaltyMatrix,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if lambda == 0.0 {
        return solve_wls(b, weights, f);
    }
    solve_penalized_design(&SparseDesign::from_dense(b), weights, f, penalty, lambda)
}

/// [`solve_penalized_wls`] over a sparse design.
pub fn solve_penalized_design(
    design: &SparseDesign,
    weights: &[f64],
    f: &DMatrix<f64>,
    penalty: &PenaltyMatrix,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must be >= 0"
        )));
    }
    let (m, n) = (design.nrows(), design.ncols());
    if weights.len() != m || f.nrows() != m {
        return Err(Error::Dimension(
            "weights/values do not match the design".into(),
        ));
    }
    if penalty.0.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "penalty is {:?}, expected {n}x{n}",
            penalty.0.shape()
        )));
    }
    if lambda == 0.0 {
        return solve_wls(&design.to_dense(), weights, f);
    }
    let mut a = design.weighted_gram(weights) * 0.5;
    a += &penalty.0 * lambda;
    let rhs = design.weighted_rhs(weights, f) * 0.5;
    let diag_max = a.diagonal().amax();
    let chol = a.cholesky().ok_or(Error::SingularRegularized { lambda })?;
    let l_diag = chol.l_dirty().diagonal();
    if l_diag.iter().any(|d| d * d < RANK_TOLERANCE * diag_max) {
        return Err(Error::SingularRegularized { lambda });
    }
    Ok(chol.solve(&rhs))
}

/// Pointwise errors `e_i = ‖v(x_i) − f_i‖₂` with their RMS and maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct FitMetrics {
    pub rmse: f64,
    pub max: f64,
    pub errors: Vec<f64>,
}

impl FitMetrics {
    pub fn from_errors(errors: Vec<f64>) -> Self {
        let m = errors.len().max(1) as f64;
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / m).sqrt();
        let max = errors.iter().copied().fold(0.0, f64::max);
        Self { rmse, max, errors }
    }

    /// RMS and maximum over a subset of indices (zero for an empty subset).
    pub fn restricted(&self, idx: &[usize]) -> (f64, f64) {
        if idx.is_empty() {
            return (0.0, 0.0);
        }
        let sq: f64 = idx.iter().map(|&i| self.errors[i].powi(2)).sum();
        let max = idx.iter().map(|&i| self.errors[i]).fold(0.0, f64::max);
        ((sq / idx.len() as f64).sqrt(), max)
    }
}

pub fn metrics<S: Basis>(f: &SplineFunction<S>, cloud: &WeightedPointCloud) -> Result<FitMetrics> {
    let errors = (0..cloud.len())
        .map(|i| {
            let v = f.evaluate(cloud.site(i))?;
            Ok(v.iter()
                .zip(cloud.values().row(i).iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FitMetrics::from_errors(errors))
}

/// Errors from precomputed fitted values `B c` (`m × D`).
pub(crate) fn errors_from_values(fitted: &DMatrix<f64>, values: &DMatrix<f64>) -> Vec<f64> {
    (fitted - values).row_iter().map(|r| r.norm()).collect()
}
