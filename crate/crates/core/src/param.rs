//! Data parameterization and knot placement for ordered data.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spline::KnotVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    Uniform,
    /// Cumulative chord length.
    Chord,
}

/// Parameter values in `[0, 1]` for the ordered rows of `values` (`m × D`).
pub fn parameterize(values: &DMatrix<f64>, method: Parameterization) -> Result<Vec<f64>> {
    let m = values.nrows();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "parameterization needs at least two points".into(),
        ));
    }
    match method {
        Parameterization::Uniform => Ok((0..m).map(|i| i as f64 / (m - 1) as f64).collect()),
        Parameterization::Chord => {
            let mut acc = Vec::with_capacity(m);
            acc.push(0.0);
            for i in 1..m {
                let d = (values.row(i) - values.row(i - 1)).norm();
                if d == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "points {} and {} coincide; chord parameterization is undefined",
                        i - 1,
                        i
                    )));
                }
                acc.push(acc[i - 1] + d);
            }
            let total = acc[m - 1];
            for v in acc.iter_mut() {
                *v /= total;
            }
            acc[m - 1] = 1.0;
            Ok(acc)
        }
    }
}

/// Clamped knot vector of dimension `n` whose interior knots average `degree`
/// consecutive parameter values.
///
/// With `n < m` the site sequence is first resampled at `n` equispaced
/// quantiles (linear interpolation in index), which keeps the knots denser
/// where the sites are denser.
pub fn averaging_knots(sites: &[f64], n: usize, degree: usize) -> Result<KnotVector> {
    let m = sites.len();
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "averaging knots: dimension {n} exceeds the number of sites {m}"
        )));
    }
    if n < degree + 1 {
        return Err(Error::InvalidArgument(format!(
            "averaging knots: dimension {n} below the order {}",
            degree + 1
        )));
    }
    if sites.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("sites must be sorted".into()));
    }
    let u: Vec<f64> = if n == m {
        sites.to_vec()
    } else {
        (0..n)
            .map(|i| {
                let pos = i as f64 * (m - 1) as f64 / (n - 1) as f64;
                let lo = (pos.floor() as usize).min(m - 1);
                let hi = (lo + 1).min(m - 1);
                let frac = pos - lo as f64;
                sites[lo] + frac * (sites[hi] - sites[lo])
            })
            .collect()
    };
    let (a, b) = (sites[0], sites[m - 1]);
    let interior: Vec<f64> = if degree == 0 {
        // midpoints between consecutive resampled sites
        (1..n).map(|j| 0.5 * (u[j - 1] + u[j])).collect()
    } else {
        (1..n - degree)
            .map(|j| u[j..j + degree].iter().sum::<f64>() / degree as f64)
            .collect()
    };
    let k = degree + 1;
    let mut knots = Vec::with_capacity(n + k);
    knots.extend(std::iter::repeat_n(a, k));
    knots.extend(interior);
    knots.extend(std::iter::repeat_n(b, k));
    KnotVector::clamped(degree, knots)
}
