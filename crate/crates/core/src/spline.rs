//! Univariate and tensor-product B-spline spaces.
//!
//! Basis functions are evaluated with the Cox–de Boor recurrence after a
//! binary search for the knot span. Every knot span is half-open except the
//! last one, which is closed, so evaluating at the right end of the domain
//! returns the limit from the left.
//!
//! Tensor-product basis functions are indexed lexicographically with the last
//! direction varying fastest.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A non-decreasing knot sequence together with a polynomial degree.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
    clamped: bool,
    /// Knot index `mu` of every nonempty span inside the domain, in order.
    spans: Vec<usize>,
}

impl KnotVector {
    /// Builds a knot vector without any end condition.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let order = degree + 1;
        if knots.len() < order + 1 {
            return Err(Error::InvalidKnots(format!(
                "{} knots give no basis function of degree {degree}",
                knots.len()
            )));
        }
        if knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be non-decreasing".into()));
        }
        let mut run = 1;
        for w in knots.windows(2) {
            run = if w[1] == w[0] { run + 1 } else { 1 };
            if run > order {
                return Err(Error::InvalidKnots(format!(
                    "knot {} has multiplicity above the order {order}",
                    w[0]
                )));
            }
        }
        let n = knots.len() - order;
        if knots[degree] >= knots[n] {
            return Err(Error::InvalidKnots("empty parametric domain".into()));
        }
        let spans = (degree..n)
            .filter(|&mu| knots[mu] < knots[mu + 1])
            .collect();
        Ok(Self {
            degree,
            knots,
            clamped: false,
            spans,
        })
    }

    /// Builds a knot vector whose end knots must both be repeated `degree + 1` times.
    pub fn clamped(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let mut kv = Self::new(degree, knots)?;
        let k = kv.order();
        let t = &kv.knots;
        let last = t.len() - 1;
        let left = t[..k].iter().all(|&v| v == t[0]);
        let right = t[last + 1 - k..].iter().all(|&v| v == t[last]);
        if !left || !right {
            return Err(Error::InvalidKnots(format!(
                "clamped knot vector needs end multiplicity {k}"
            )));
        }
        kv.clamped = true;
        Ok(kv)
    }

    /// Open (clamped) knot vector on `[a, b]` with simple interior knots.
    pub fn open(domain: (f64, f64), degree: usize, interior: &[f64]) -> Result<Self> {
        let (a, b) = domain;
        if !(a < b) {
            return Err(Error::InvalidKnots(format!("invalid domain [{a}, {b}]")));
        }
        if interior.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKnots(
                "interior breakpoints must be strictly increasing".into(),
            ));
        }
        if interior.iter().any(|&x| x <= a || x >= b) {
            return Err(Error::InvalidKnots(
                "interior breakpoints must lie strictly inside the domain".into(),
            ));
        }
        let k = degree + 1;
        let mut knots = Vec::with_capacity(2 * k + interior.len());
        knots.extend(std::iter::repeat_n(a, k));
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(b, k));
        Self::clamped(degree, knots)
    }

    /// Uniform open knot vector with `interior` equally spaced interior knots.
    pub fn uniform(domain: (f64, f64), degree: usize, interior: usize) -> Result<Self> {
        let (a, b) = domain;
        let h = (b - a) / (interior + 1) as f64;
        let inner: Vec<f64> = (1..=interior).map(|i| a + h * i as f64).collect();
        Self::open(domain, degree, &inner)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.degree + 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn is_clamped(&self) -> bool {
        self.clamped
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.order()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.dim()])
    }

    pub fn contains(&self, x: f64) -> bool {
        let (a, b) = self.domain();
        x >= a && x <= b
    }

    /// Number of nonempty knot spans (cells) inside the domain.
    pub fn num_spans(&self) -> usize {
        self.spans.len()
    }

    /// Interval covered by nonempty span `s`.
    pub fn span_interval(&self, s: usize) -> (f64, f64) {
        let mu = self.spans[s];
        (self.knots[mu], self.knots[mu + 1])
    }

    /// Distinct knot values inside the domain.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.spans.iter().map(|&mu| self.knots[mu]).collect();
        b.push(self.domain().1);
        b
    }

    /// Knot index `mu` with `t[mu] <= x < t[mu + 1]` (closed last span).
    /// `x` must lie in the domain.
    pub fn find_span(&self, x: f64) -> usize {
        let n = self.dim();
        if x >= self.knots[n] {
            return *self.spans.last().expect("nonempty domain");
        }
        let idx = self.knots.partition_point(|&v| v <= x);
        idx.saturating_sub(1).clamp(self.degree, n - 1)
    }

    /// Index of the nonempty span containing `x`.
    pub fn span_index(&self, x: f64) -> usize {
        let mu = self.find_span(x);
        self.spans.partition_point(|&m| m < mu)
    }

    /// Nonempty spans covered by the support of basis function `j`.
    pub fn support_spans(&self, j: usize) -> Range<usize> {
        let lo = self.spans.partition_point(|&mu| mu < j);
        let hi = self.spans.partition_point(|&mu| mu <= j + self.degree);
        lo..hi
    }

    /// Values of the `degree + 1` basis functions that may be nonzero on `span`.
    fn basis_funs(&self, span: usize, x: f64) -> Vec<f64> {
        let d = self.degree;
        let t = &self.knots;
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Derivatives of order `0..=order` of the nonzero basis functions on `span`.
    /// Row `r` holds the `r`-th derivatives.
    fn ders_basis_funs(&self, span: usize, x: f64, order: usize) -> Vec<Vec<f64>> {
        let d = self.degree;
        let t = &self.knots;
        let mut ndu = vec![vec![0.0; d + 1]; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        ndu[0][0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                // lower triangle holds knot differences
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; d + 1]; order + 1];
        for j in 0..=d {
            ders[0][j] = ndu[j][d];
        }
        let mut a = vec![vec![0.0; d + 1]; 2];
        for r in 0..=d {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=order {
                let mut dk = 0.0;
                let rk = r as isize - k as isize;
                let pk = d - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    dk = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize {
                    k - 1
                } else {
                    d - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    dk += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    dk += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = dk;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = d as f64;
        for (k, row) in ders.iter_mut().enumerate().take(order + 1).skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (d - k) as f64;
        }
        ders
    }

    /// Nonzero basis values at `x` as `(index, value)` pairs.
    pub fn eval(&self, x: f64) -> Result<Vec<(usize, f64)>> {
        self.eval_derivative(x, 0)
    }

    /// `order`-th derivatives of the basis functions supported at `x`.
    pub fn eval_derivative(&self, x: f64, order: usize) -> Result<Vec<(usize, f64)>> {
        if !self.contains(x) {
            return Err(Error::OutsideDomain { point: vec![x] });
        }
        if order > self.degree {
            return Err(Error::DerivativeOrder {
                order,
                degree: self.degree,
            });
        }
        let span = self.find_span(x);
        let first = span - self.degree;
        let values = if order == 0 {
            self.basis_funs(span, x)
        } else {
            self.ders_basis_funs(span, x, order).swap_remove(order)
        };
        Ok(values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (first + i, v))
            .collect())
    }

    /// Greville abscissae, one per basis function.
    pub fn greville(&self) -> Vec<f64> {
        let d = self.degree;
        let t = &self.knots;
        (0..self.dim())
            .map(|j| {
                if d == 0 {
                    0.5 * (t[j] + t[j + 1])
                } else {
                    t[j + 1..=j + d].iter().sum::<f64>() / d as f64
                }
            })
            .collect()
    }

    /// Inserts the midpoint of every nonempty span once.
    pub fn dyadic_refine(&self) -> KnotVector {
        let mut knots = self.knots.clone();
        for s in 0..self.num_spans() {
            let (a, b) = self.span_interval(s);
            knots.push(0.5 * (a + b));
        }
        knots.sort_by(f64::total_cmp);
        let mut out = KnotVector::new(self.degree, knots).expect("refinement keeps validity");
        out.clamped = self.clamped;
        out
    }
}

/// A finite-dimensional space of real functions with a known basis.
///
/// Implemented by tensor-product B-spline spaces and hierarchical spaces, so
/// that least-squares machinery only needs rows of basis values.
pub trait Basis {
    /// Number of basis functions `n`.
    fn dim(&self) -> usize;

    /// Dimension `N` of the parameter domain.
    fn param_dim(&self) -> usize;

    /// Degree per parameter direction.
    fn degrees(&self) -> Vec<usize>;

    /// Axis-aligned parametric domain as one `(lo, hi)` pair per direction.
    fn bounds(&self) -> Vec<(f64, f64)>;

    fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.param_dim()
            && x.iter()
                .zip(self.bounds())
                .all(|(&v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Nonzero basis values at `x`.
    fn eval_basis(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        self.eval_basis_derivatives(x, &vec![0; self.param_dim()])
    }

    /// Partial derivatives `∂^order` of the basis functions supported at `x`.
    fn eval_basis_derivatives(&self, x: &[f64], order: &[usize]) -> Result<Vec<(usize, f64)>>;
}

/// Tensor product of univariate B-spline spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace {
    dirs: Vec<KnotVector>,
}

impl SplineSpace {
    pub fn new(dirs: Vec<KnotVector>) -> Result<Self> {
        if dirs.is_empty() {
            return Err(Error::Dimension(
                "a spline space needs at least one direction".into(),
            ));
        }
        Ok(Self { dirs })
    }

    pub fn univariate(kv: KnotVector) -> Self {
        Self { dirs: vec![kv] }
    }

    /// Polynomials of degree `degree` on `[a, b]`, as a single-span spline space
    /// (Bernstein basis).
    pub fn polynomial(domain: (f64, f64), degree: usize) -> Result<Self> {
        Ok(Self::univariate(KnotVector::open(domain, degree, &[])?))
    }

    pub fn directions(&self) -> &[KnotVector] {
        &self.dirs
    }

    pub fn direction(&self, d: usize) -> &KnotVector {
        &self.dirs[d]
    }

    /// Per-direction number of basis functions.
    pub fn shape(&self) -> Vec<usize> {
        self.dirs.iter().map(KnotVector::dim).collect()
    }

    /// Per-direction number of nonempty spans.
    pub fn cell_shape(&self) -> Vec<usize> {
        self.dirs.iter().map(KnotVector::num_spans).collect()
    }

    /// Flat index of a per-direction multi-index (last direction fastest).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.dirs)
            .fold(0, |acc, (&i, kv)| acc * kv.dim() + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dirs.len()];
        for (d, kv) in self.dirs.iter().enumerate().rev() {
            out[d] = flat % kv.dim();
            flat /= kv.dim();
        }
        out
    }

    /// Per-direction span ranges covered by the support of basis function `j`.
    pub fn support_cells(&self, j: usize) -> Vec<Range<usize>> {
        self.multi_index(j)
            .iter()
            .zip(&self.dirs)
            .map(|(&i, kv)| kv.support_spans(i))
            .collect()
    }

    /// Per-direction span indices of the cell containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> Result<Vec<usize>> {
        if !self.contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        Ok(x.iter()
            .zip(&self.dirs)
            .map(|(&v, kv)| kv.span_index(v))
            .collect())
    }

    /// Inserts every span midpoint in every direction.
    pub fn dyadic_refine(&self) -> SplineSpace {
        Self {
            dirs: self.dirs.iter().map(KnotVector::dyadic_refine).collect(),
        }
    }
}

impl Basis for SplineSpace {
    fn dim(&self) -> usize {
        self.dirs.iter().map(KnotVector::dim).product()
    }

    fn param_dim(&self) -> usize {
        self.dirs.len()
    }

    fn degrees(&self) -> Vec<usize> {
        self.dirs.iter().map(KnotVector::degree).collect()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.dirs.iter().map(KnotVector::domain).collect()
    }

    fn eval_basis_derivatives(&self, x: &[f64], order: &[usize]) -> Result<Vec<(usize, f64)>> {
        if x.len() != self.dirs.len() || order.len() != self.dirs.len() {
            return Err(Error::Dimension(format!(
                "expected {} coordinates, got point {} / order {}",
                self.dirs.len(),
                x.len(),
                order.len()
            )));
        }
        if !self.contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        let per_dir = self
            .dirs
            .iter()
            .zip(x.iter().zip(order))
            .map(|(kv, (&v, &r))| kv.eval_derivative(v, r))
            .collect::<Result<Vec<_>>>()?;
        let mut out: Vec<(usize, f64)> = vec![(0, 1.0)];
        for (kv, vals) in self.dirs.iter().zip(&per_dir) {
            let mut next = Vec::with_capacity(out.len() * vals.len());
            for &(idx, v) in &out {
                for &(i, w) in vals {
                    next.push((idx * kv.dim() + i, v * w));
                }
            }
            out = next;
        }
        Ok(out)
    }
}

/// Dense `m × n` collocation matrix `B[i][j] = β_j(x_i)`.
pub fn collocation_matrix<'a, S, I>(space: &S, sites: I) -> Result<DMatrix<f64>>
where
    S: Basis + ?Sized,
    I: IntoIterator<Item = &'a [f64]>,
{
    let rows = sites
        .into_iter()
        .map(|x| space.eval_basis(x))
        .collect::<Result<Vec<_>>>()?;
    let mut b = DMatrix::zeros(rows.len(), space.dim());
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            b[(i, j)] = v;
        }
    }
    Ok(b)
}

/// Schoenberg–Whitney nesting test for a univariate space and `dim` sites.
///
/// After sorting, site `ξ_j` must satisfy `t_j < ξ_j < t_{j+k}`; a site sitting
/// on a knot is accepted when `β_j(ξ_j) > 0` (clamped ends). Repeated sites fail.
pub fn schoenberg_whitney_admissible(kv: &KnotVector, sites: &[f64]) -> Result<bool> {
    if sites.len() != kv.dim() {
        return Err(Error::Dimension(format!(
            "Schoenberg-Whitney check needs {} sites, got {}",
            kv.dim(),
            sites.len()
        )));
    }
    let mut xi = sites.to_vec();
    xi.sort_by(f64::total_cmp);
    if xi.windows(2).any(|w| w[0] == w[1]) {
        return Ok(false);
    }
    let t = kv.knots();
    let k = kv.order();
    for (j, &x) in xi.iter().enumerate() {
        if t[j] < x && x < t[j + k] {
            continue;
        }
        let on_support = kv.eval(x)?.iter().any(|&(i, v)| i == j && v > 0.0);
        if !on_support {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A function `v = Σ c_j β_j` with `D`-dimensional values.
#[derive(Debug, Clone)]
pub struct SplineFunction<S> {
    space: S,
    coefficients: DMatrix<f64>,
}

impl<S: Basis> SplineFunction<S> {
    /// `coefficients` is `n × D`.
    pub fn new(space: S, coefficients: DMatrix<f64>) -> Result<Self> {
        if coefficients.nrows() != space.dim() {
            return Err(Error::Dimension(format!(
                "{} coefficient rows for a space of dimension {}",
                coefficients.nrows(),
                space.dim()
            )));
        }
        Ok(Self {
            space,
            coefficients,
        })
    }

    pub fn space(&self) -> &S {
        &self.space
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn value_dim(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.combine(self.space.eval_basis(x)?)
    }

    pub fn evaluate_derivative(&self, x: &[f64], order: &[usize]) -> Result<Vec<f64>> {
        self.combine(self.space.eval_basis_derivatives(x, order)?)
    }

    fn combine(&self, basis: Vec<(usize, f64)>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.value_dim()];
        for (j, b) in basis {
            for (o, c) in out.iter_mut().zip(self.coefficients.row(j).iter()) {
                *o += b * c;
            }
        }
        Ok(out)
    }
}
