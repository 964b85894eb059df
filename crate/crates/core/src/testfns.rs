//! Benchmark functions and deterministic sampling used by the experiments.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Three exponential peaks on `[-1, 1]²`, centred at `(0.3, 0.3)`,
/// `(-0.3, -0.3)` and the origin, each of height `2/3`.
pub fn three_peaks(x: f64, y: f64) -> f64 {
    let peak = |cx: f64, cy: f64| {
        let r = ((10.0 * x - cx).powi(2) + (10.0 * y - cy).powi(2)).sqrt();
        2.0 / (3.0 * r.exp())
    };
    peak(3.0, 3.0) + peak(-3.0, -3.0) + peak(0.0, 0.0)
}

/// Univariate curves with sharp features on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCurve {
    /// `|9 sin(3πx) / (tanh(1 − 1.5x) + 1)|`: kinks at 1/3 and 2/3.
    AbsSine,
    /// Gaussian bump of width 0.02 centred at 0.5.
    Gaussian,
    /// `tanh(cos(2πx) / 0.05)`: steep transitions at 1/4 and 3/4.
    TanhCosine,
}

impl TestCurve {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Self::AbsSine),
            2 => Ok(Self::Gaussian),
            3 => Ok(Self::TanhCosine),
            _ => Err(Error::InvalidArgument(format!("unknown test curve {id}"))),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::AbsSine => (9.0 * (3.0 * PI * x).sin() / ((-1.5 * x + 1.0).tanh() + 1.0)).abs(),
            Self::Gaussian => {
                let z = (x - 0.5) / 0.02;
                (-z * z).exp() / (0.02 * PI.sqrt())
            }
            Self::TanhCosine => ((2.0 * PI * x).cos() / 0.05).tanh(),
        }
    }

    /// Locations of the sharp features.
    pub fn features(self) -> &'static [f64] {
        match self {
            Self::AbsSine => &[1.0 / 3.0, 2.0 / 3.0],
            Self::Gaussian => &[0.5],
            Self::TanhCosine => &[0.25, 0.75],
        }
    }

    /// Point count, interior knot count used in the curve experiments.
    pub fn experiment_setup(self) -> (usize, usize) {
        match self {
            Self::AbsSine => (62, 37),
            Self::Gaussian => (88, 47),
            Self::TanhCosine => (71, 47),
        }
    }
}

/// `evaluate_test_curves` by numeric id (1, 2 or 3).
pub fn test_curve(id: u8, x: f64) -> Result<f64> {
    Ok(TestCurve::from_id(id)?.eval(x))
}

/// Sampling density on `[0, 1]` that concentrates points at features:
/// `p(x) ∝ 1 + amplitude · Σ_c exp(−(x − c)² / (2 width²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDensity {
    pub centers: Vec<f64>,
    pub amplitude: f64,
    pub width: f64,
}

impl FeatureDensity {
    /// Density used for the curve experiments: amplitude 4, width 0.03.
    pub fn for_curve(curve: TestCurve) -> Self {
        Self {
            centers: curve.features().to_vec(),
            amplitude: 4.0,
            width: 0.03,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        1.0 + self
            .centers
            .iter()
            .map(|c| self.amplitude * (-(x - c).powi(2) / (2.0 * self.width.powi(2))).exp())
            .sum::<f64>()
    }

    /// `m` sites at the quantiles `i / (m − 1)` of the density, so the first
    /// is 0 and the last is 1. The CDF is tabulated with the trapezoidal rule
    /// on 20 000 intervals and inverted by linear interpolation.
    pub fn sites(&self, m: usize) -> Vec<f64> {
        const STEPS: usize = 20_000;
        let h = 1.0 / STEPS as f64;
        let mut cdf = Vec::with_capacity(STEPS + 1);
        cdf.push(0.0);
        for s in 0..STEPS {
            let a = s as f64 * h;
            let prev = *cdf.last().unwrap();
            cdf.push(prev + 0.5 * h * (self.eval(a) + self.eval(a + h)));
        }
        let total = cdf[STEPS];
        (0..m)
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                if i == m - 1 {
                    return 1.0;
                }
                let target = total * i as f64 / (m - 1) as f64;
                let s = cdf.partition_point(|&c| c < target).clamp(1, STEPS);
                let (c0, c1) = (cdf[s - 1], cdf[s]);
                ((s - 1) as f64 + (target - c0) / (c1 - c0)) * h
            })
            .collect()
    }
}

/// Indices of the `count` samples with the largest absolute slope, where the
/// slope at a sample is the larger of its one-sided difference quotients.
/// Ties resolve to the lower index; the result is sorted.
pub fn top_gradient_indices(xs: &[f64], ys: &[f64], count: usize) -> Vec<usize> {
    let m = xs.len();
    let slope = |i: usize| -> f64 {
        let left = if i > 0 {
            ((ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1])).abs()
        } else {
            0.0
        };
        let right = if i + 1 < m {
            ((ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).abs()
        } else {
            0.0
        };
        left.max(right)
    };
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| slope(b).total_cmp(&slope(a)).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Marker indices for the curve experiments: for each feature, the
/// `per_feature` samples within `radius` of it with the largest slope
/// (as in [`top_gradient_indices`]). Sorted and deduplicated.
pub fn feature_markers(
    xs: &[f64],
    ys: &[f64],
    features: &[f64],
    radius: f64,
    per_feature: usize,
) -> Vec<usize> {
    let mut out = Vec::new();
    for &c in features {
        let near: Vec<usize> = (0..xs.len())
            .filter(|&i| (xs[i] - c).abs() <= radius)
            .collect();
        let sx: Vec<f64> = near.iter().map(|&i| xs[i]).collect();
        let sy: Vec<f64> = near.iter().map(|&i| ys[i]).collect();
        out.extend(
            top_gradient_indices(&sx, &sy, per_feature)
                .into_iter()
                .map(|j| near[j]),
        );
    }
    out.sort_unstable();
    out.dedup();
    out
}
