use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spline::Basis;

/// Per-point marker label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Marker {
    #[default]
    Plain,
    /// Feature to preserve: the weight grows while the error is too large.
    TypeOne,
    /// Noise or outlier: the weight shrinks.
    TypeTwo,
}

impl Marker {
    pub fn code(self) -> u8 {
        match self {
            Marker::Plain => 0,
            Marker::TypeOne => 1,
            Marker::TypeTwo => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Marker::Plain),
            1 => Some(Marker::TypeOne),
            2 => Some(Marker::TypeTwo),
            _ => None,
        }
    }
}

/// Sites `x_i ∈ R^N`, values `f_i ∈ R^D`, positive weights and markers.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointCloud {
    param_dim: usize,
    sites: Vec<f64>,
    values: DMatrix<f64>,
    weights: Vec<f64>,
    markers: Vec<Marker>,
}

impl WeightedPointCloud {
    /// `sites` is row-major `m × N`; weights default to one, markers to plain.
    pub fn new(param_dim: usize, sites: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        let m = values.nrows();
        if m == 0 {
            return Err(Error::InvalidArgument("empty point cloud".into()));
        }
        if param_dim == 0 || sites.len() != m * param_dim {
            return Err(Error::Dimension(format!(
                "{} site coordinates for {m} points in dimension {param_dim}",
                sites.len()
            )));
        }
        Ok(Self {
            param_dim,
            sites,
            values,
            weights: vec![1.0; m],
            markers: vec![Marker::Plain; m],
        })
    }

    /// Univariate sites with `D`-dimensional values given as an `m × D` matrix.
    pub fn univariate(sites: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        Self::new(1, sites, values)
    }

    /// Univariate scalar data.
    pub fn from_xy(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Dimension("x and y lengths differ".into()));
        }
        Self::new(1, xs.to_vec(), DMatrix::from_column_slice(ys.len(), 1, ys))
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.set_weights(weights)?;
        Ok(self)
    }

    pub fn with_markers(mut self, markers: Vec<Marker>) -> Result<Self> {
        if markers.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} markers for {} points",
                markers.len(),
                self.len()
            )));
        }
        self.markers = markers;
        Ok(self)
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} points",
                weights.len(),
                self.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight {w} is not positive"
            )));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn value_dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.sites[i * self.param_dim..(i + 1) * self.param_dim]
    }

    pub fn sites(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.sites.chunks_exact(self.param_dim)
    }

    pub fn site_coords(&self) -> &[f64] {
        &self.sites
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn indices_with(&self, marker: Marker) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.markers[i] == marker)
            .collect()
    }

    /// Largest absolute value entry, used to scale tolerances.
    pub fn data_scale(&self) -> f64 {
        self.values.amax().max(f64::MIN_POSITIVE)
    }

    /// Sub-cloud restricted to `idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let sites = idx
            .iter()
            .flat_map(|&i| self.site(i).iter().copied())
            .collect();
        let values = self.values.select_rows(idx);
        Self {
            param_dim: self.param_dim,
            sites,
            values,
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            markers: idx.iter().map(|&i| self.markers[i]).collect(),
        }
    }

    /// Checks that every site lies in the domain of `space`.
    pub fn check_inside<S: Basis + ?Sized>(&self, space: &S) -> Result<()> {
        if space.param_dim() != self.param_dim {
            return Err(Error::Dimension(format!(
                "cloud has {}-dimensional sites, space expects {}",
                self.param_dim,
                space.param_dim()
            )));
        }
        match self.sites().find(|x| !space.contains(x)) {
            Some(x) => Err(Error::OutsideDomain { point: x.to_vec() }),
            None => Ok(()),
        }
    }
}
