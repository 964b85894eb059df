//! Weighted least-squares approximants as convex combinations of interpolants.
//!
//! For data `(x_i, f_i, ω_i)`, `i = 1..m`, and a space of dimension `n ≤ m`,
//! every `n`-subset `K` whose collocation minor `B_K` is nonsingular defines a
//! unique interpolant `v_K`. With `λ_K = (Π_{i∈K} ω_i) · det(B_K)²` the weighted
//! least-squares fit is
//!
//! ```text
//! v(x) = Σ_K λ_K v_K(x) / Σ_K λ_K
//! ```
//!
//! and the same weights average every derivative of the interpolants. By the
//! Cauchy–Binet formula the normalizer equals `det(Bᵀ W B)`.
//!
//! The subset count grows combinatorially, so this module is a verification
//! tool rather than a solver; see [`crate::wls`] for production fits.

use nalgebra::DMatrix;

use crate::cloud::WeightedPointCloud;
use crate::error::{Error, Result};
use crate::spline::{collocation_matrix, Basis, SplineFunction};
use crate::wls::{errors_from_values, solve_wls};

/// Largest number of subsets [`decompose`] agrees to enumerate.
pub const DEFAULT_SUBSET_CAP: u128 = 1_000_000;

/// A minor is singular when `|det| < SINGULAR_TOLERANCE × Π_i max_j |B_K[i][j]|`.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(m: usize, n: usize) -> u128 {
    if n > m {
        return 0;
    }
    let n = n.min(m - n);
    let mut acc: u128 = 1;
    for i in 0..n {
        acc = match acc.checked_mul((m - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic stream of the `n`-subsets of `{0, …, m−1}`.
#[derive(Debug, Clone)]
pub struct Subsets {
    m: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let n = out.len();
        let mut next = out.clone();
        let mut i = n;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.m - n + i {
                next[i] += 1;
                for j in i + 1..n {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// All `n`-subsets of `m` indices in lexicographic order, refusing more than `cap`.
pub fn enumerate_subsets(m: usize, n: usize, cap: u128) -> Result<Subsets> {
    if n == 0 || n > m {
        return Err(Error::InvalidArgument(format!(
            "subset size must satisfy 1 <= n <= m (n = {n}, m = {m})"
        )));
    }
    if binomial(m, n) > cap {
        return Err(Error::CapExceeded { m, n, cap });
    }
    Ok(Subsets {
        m,
        current: Some((0..n).collect()),
    })
}

/// Interpolation data for one subset `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetCertificate {
    /// Sorted, zero-based point indices.
    pub subset: Vec<usize>,
    pub det: f64,
    pub admissible: bool,
    /// `ω_K · det²`.
    pub lambda: f64,
    /// `n × D` interpolant coefficients, present iff admissible.
    pub coefficients: Option<DMatrix<f64>>,
}

fn certificate_from_rows(
    collocation: &DMatrix<f64>,
    cloud: &WeightedPointCloud,
    subset: &[usize],
) -> SubsetCertificate {
    let bk = collocation.select_rows(subset);
    let scale: f64 = bk.row_iter().map(|r| r.amax()).product();
    let lu = bk.lu();
    let det = lu.determinant();
    let omega: f64 = subset.iter().map(|&i| cloud.weights()[i]).product();
    let admissible = det.is_finite() && det.abs() >= SINGULAR_TOLERANCE * scale && scale > 0.0;
    let coefficients = if admissible {
        lu.solve(&cloud.values().select_rows(subset))
    } else {
        None
    };
    SubsetCertificate {
        subset: subset.to_vec(),
        det,
        admissible: coefficients.is_some(),
        lambda: omega * det * det,
        coefficients,
    }
}

/// Solves the interpolation problem on the points indexed by `subset`.
pub fn interpolate_subset<S: Basis + ?Sized>(
    space: &S,
    cloud: &WeightedPointCloud,
    subset: &[usize],
) -> Result<SubsetCertificate> {
    if subset.len() != space.dim() {
        return Err(Error::Dimension(format!(
            "subset of size {} for a space of dimension {}",
            subset.len(),
            space.dim()
        )));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::InvalidArgument(format!("index {i} out of range")));
    }
    let rows: Vec<&[f64]> = subset.iter().map(|&i| cloud.site(i)).collect();
    let b = collocation_matrix(space, rows.iter().copied())?;
    let local: Vec<usize> = (0..subset.len()).collect();
    let mut cert = certificate_from_rows(&b, &cloud.select(subset), &local);
    cert.subset = subset.to_vec();
    Ok(cert)
}

/// All subset certificates of a weighted least-squares problem.
#[derive(Debug, Clone)]
pub struct Decomposition<S> {
    space: S,
    certificates: Vec<SubsetCertificate>,
    normalizer: f64,
    gram_determinant: f64,
    value_dim: usize,
}

/// Enumerates every `n`-subset with the default cap.
pub fn decompose<S: Basis + Clone>(
    space: &S,
    cloud: &WeightedPointCloud,
) -> Result<Decomposition<S>> {
    decompose_with_cap(space, cloud, DEFAULT_SUBSET_CAP)
}

pub fn decompose_with_cap<S: Basis + Clone>(
    space: &S,
    cloud: &WeightedPointCloud,
    cap: u128,
) -> Result<Decomposition<S>> {
    cloud.check_inside(space)?;
    let (m, n) = (cloud.len(), space.dim());
    let subsets = enumerate_subsets(m, n, cap)?;
    let b = collocation_matrix(space, cloud.sites())?;
    let certificates: Vec<SubsetCertificate> = subsets
        .map(|k| certificate_from_rows(&b, cloud, &k))
        .collect();
    let normalizer: f64 = certificates
        .iter()
        .filter(|c| c.admissible)
        .map(|c| c.lambda)
        .sum();
    if !(normalizer > 0.0) {
        return Err(Error::RankDeficient);
    }
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(cloud.weights()));
    let gram_determinant = (b.transpose() * w * &b).determinant();
    debug_assert!(
        (normalizer - gram_determinant).abs()
            <= 1e-6 * normalizer.abs().max(gram_determinant.abs()),
        "Cauchy-Binet mismatch: {normalizer} vs {gram_determinant}"
    );
    Ok(Decomposition {
        space: space.clone(),
        certificates,
        normalizer,
        gram_determinant,
        value_dim: cloud.value_dim(),
    })
}

impl<S: Basis + Clone> Decomposition<S> {
    pub fn space(&self) -> &S {
        &self.space
    }

    pub fn certificates(&self) -> &[SubsetCertificate] {
        &self.certificates
    }

    pub fn admissible(&self) -> impl Iterator<Item = &SubsetCertificate> {
        self.certificates.iter().filter(|c| c.admissible)
    }

    pub fn admissible_count(&self) -> usize {
        self.admissible().count()
    }

    /// `Σ λ_K` over admissible subsets.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `det(Bᵀ W B)` computed directly.
    pub fn gram_determinant(&self) -> f64 {
        self.gram_determinant
    }

    /// `|Σ λ_K − det(Bᵀ W B)| / |det(Bᵀ W B)|`.
    pub fn cauchy_binet_residual(&self) -> f64 {
        (self.normalizer - self.gram_determinant).abs() / self.gram_determinant.abs()
    }

    /// Interpolant values `∂^order v_K(x)` for every admissible `K`, in order.
    fn interpolant_values(&self, x: &[f64], order: &[usize]) -> Result<Vec<(f64, Vec<f64>)>> {
        let basis = self.space.eval_basis_derivatives(x, order)?;
        Ok(self
            .admissible()
            .map(|c| {
                let coef = c.coefficients.as_ref().expect("admissible");
                let mut v = vec![0.0; self.value_dim];
                for &(j, b) in &basis {
                    for (k, vk) in v.iter_mut().enumerate() {
                        *vk += b * coef[(j, k)];
                    }
                }
                (c.lambda, v)
            })
            .collect())
    }

    /// `Σ λ_K v_K(x) / Σ λ_K`.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.reconstruct_derivative(x, &vec![0; self.space.param_dim()])
    }

    /// `Σ λ_K ∂^order v_K(x) / Σ λ_K`.
    pub fn reconstruct_derivative(&self, x: &[f64], order: &[usize]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.value_dim];
        for (lambda, v) in self.interpolant_values(x, order)? {
            for (a, vk) in acc.iter_mut().zip(v) {
                *a += lambda * vk;
            }
        }
        Ok(acc.into_iter().map(|a| a / self.normalizer).collect())
    }

    /// Componentwise minimum and maximum of `∂^order v_K(x)` over admissible `K`.
    pub fn derivative_bounds(&self, x: &[f64], order: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut lo = vec![f64::INFINITY; self.value_dim];
        let mut hi = vec![f64::NEG_INFINITY; self.value_dim];
        for (_, v) in self.interpolant_values(x, order)? {
            for k in 0..self.value_dim {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Ok((lo, hi))
    }

    /// The reconstruction as a single function (`Σ λ_K c_K / Σ λ_K`).
    pub fn to_function(&self) -> Result<SplineFunction<S>> {
        let mut c = DMatrix::zeros(self.space.dim(), self.value_dim);
        for cert in self.admissible() {
            c += cert.coefficients.as_ref().expect("admissible") * cert.lambda;
        }
        SplineFunction::new(self.space.clone(), c / self.normalizer)
    }
}

/// Weighted least-squares fit with the weights of `pinned` replaced by `magnitude`.
///
/// As `magnitude → ∞` the fit tends to the interpolant of the pinned points
/// when `|pinned| = n`, and to a λ-weighted average of interpolants through
/// them when `|pinned| < n`.
pub fn weight_limit_solution<S: Basis + Clone>(
    space: &S,
    cloud: &WeightedPointCloud,
    pinned: &[usize],
    magnitude: f64,
) -> Result<SplineFunction<S>> {
    if pinned.len() > space.dim() {
        return Err(Error::InvalidArgument(format!(
            "{} pinned points exceed the dimension {}",
            pinned.len(),
            space.dim()
        )));
    }
    let mut weights = cloud.weights().to_vec();
    if !pinned.is_empty() {
        if !(magnitude > 0.0) || !magnitude.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "weight magnitude {magnitude} must be positive"
            )));
        }
        for &i in pinned {
            *weights
                .get_mut(i)
                .ok_or_else(|| Error::InvalidArgument(format!("index {i} out of range")))? =
                magnitude;
        }
    }
    let b = collocation_matrix(space, cloud.sites())?;
    let c = solve_wls(&b, &weights, cloud.values())?;
    SplineFunction::new(space.clone(), c)
}

/// Exponent applied to residual magnitudes in the IRLS weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IrlsExponent {
    /// `ω_i = r_i^{(p−2)/2}`.
    Paper,
    /// `ω_i = r_i^{p−2}`, the classical choice.
    #[default]
    Standard,
}

impl IrlsExponent {
    pub fn exponent(self, p: f64) -> f64 {
        match self {
            IrlsExponent::Paper => (p - 2.0) / 2.0,
            IrlsExponent::Standard => p - 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IrlsResult<S> {
    pub function: SplineFunction<S>,
    /// `Σ ‖r_i‖^p`: entry 0 for the unweighted start, then one per iteration.
    pub objectives: Vec<f64>,
    pub weights: Vec<f64>,
}

fn lp_objective(errors: &[f64], p: f64) -> f64 {
    errors.iter().map(|e| e.powf(p)).sum()
}

/// Iteratively reweighted least squares for `min Σ ‖u(x_i) − f_i‖^p`, `1 < p < 2`.
///
/// Starts from the unweighted fit and performs `max_iter` reweighted solves;
/// residual magnitudes are floored at `delta` before exponentiation.
pub fn irls_solve<S: Basis + Clone>(
    space: &S,
    cloud: &WeightedPointCloud,
    p: f64,
    max_iter: usize,
    mode: IrlsExponent,
    delta: f64,
) -> Result<IrlsResult<S>> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidArgument(format!(
            "p = {p} must lie in (1, 2)"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("at least one IRLS iteration".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} must be positive"
        )));
    }
    let b = collocation_matrix(space, cloud.sites())?;
    let f = cloud.values();
    let exponent = mode.exponent(p);
    let mut weights = vec![1.0; cloud.len()];
    let mut c = solve_wls(&b, &weights, f)?;
    let mut errors = errors_from_values(&(&b * &c), f);
    let mut objectives = vec![lp_objective(&errors, p)];
    for _ in 0..max_iter {
        weights = errors.iter().map(|e| e.max(delta).powf(exponent)).collect();
        c = solve_wls(&b, &weights, f)?;
        errors = errors_from_values(&(&b * &c), f);
        objectives.push(lp_objective(&errors, p));
    }
    Ok(IrlsResult {
        function: SplineFunction::new(space.clone(), c)?,
        objectives,
        weights,
    })
}
