//! Marker-driven reweighted least-squares fitting.
//!
//! [`rwls_fit`] works in a fixed space: it alternates weighted solves with
//! weight updates on the marked points until the type-I markers are within
//! `tol_one` and the points outside the type-II set are within `tol_two`.
//!
//! [`adaptive_rwls_fit`] does the same on a hierarchical space, shrinking the
//! marker sets as points meet their tolerance and refining the cells that
//! hold points with error above `eps`.

use nalgebra::DMatrix;

use crate::cloud::{Marker, WeightedPointCloud};
use crate::error::{Error, Result};
use crate::hierarchical::{mark_cells, CellId, HierarchicalSpace, RefineOptions};
use crate::spline::{Basis, SplineFunction, SplineSpace};
use crate::wls::{
    assemble_thin_plate, errors_from_values, solve_penalized_design, solve_wls, FitMetrics,
    PenaltyMatrix, SparseDesign, Tessellated,
};

/// Weight multiplier rule `α(e_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    /// `1 + e` for type I, `1 / (1 + e)` for type II.
    ErrorDriven,
    /// `ρ` for type I, `1 / ρ` for type II. `ρ = 1` freezes the weights.
    FixedFactor(f64),
    /// `1 / max(δ, e)` for type II; type I uses the error-driven rule.
    Irls { delta: f64 },
}

impl AlphaMode {
    pub fn factor(self, marker: Marker, e: f64) -> f64 {
        match (self, marker) {
            (_, Marker::Plain) => 1.0,
            (AlphaMode::ErrorDriven, Marker::TypeOne) => 1.0 + e,
            (AlphaMode::ErrorDriven, Marker::TypeTwo) => 1.0 / (1.0 + e),
            (AlphaMode::FixedFactor(rho), Marker::TypeOne) => rho,
            (AlphaMode::FixedFactor(rho), Marker::TypeTwo) => 1.0 / rho,
            (AlphaMode::Irls { .. }, Marker::TypeOne) => 1.0 + e,
            (AlphaMode::Irls { delta }, Marker::TypeTwo) => 1.0 / delta.max(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub tol_one: f64,
    pub tol_two: f64,
    /// Error threshold driving adaptive refinement.
    pub eps: f64,
    /// Thin-plate penalty weight.
    pub lambda: f64,
    pub max_iter: usize,
    pub max_levels: usize,
    pub alpha: AlphaMode,
    /// Update every marked point each iteration instead of only violators.
    pub update_all_marked: bool,
    pub refine: RefineOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol_one: 1e-3,
            tol_two: f64::INFINITY,
            eps: 1e-3,
            lambda: 0.0,
            max_iter: 100,
            max_levels: 5,
            alpha: AlphaMode::ErrorDriven,
            update_all_marked: false,
            refine: RefineOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.tol_one > 0.0) || !(self.tol_two > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be a finite value >= 0");
        }
        if self.max_iter == 0 || self.max_levels == 0 {
            return bad("iteration and level caps must be at least 1");
        }
        match self.alpha {
            AlphaMode::FixedFactor(rho) if !(rho >= 1.0) || !rho.is_finite() => {
                bad("fixed factor must be >= 1")
            }
            AlphaMode::Irls { delta } if !(delta > 0.0) => bad("IRLS delta must be positive"),
            _ => Ok(()),
        }
    }
}

/// Per-iteration statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub dofs: usize,
    pub rmse: f64,
    pub max: f64,
    /// Maximum error over the current type-I markers (0 when empty).
    pub max_type_one: f64,
    /// Maximum error over points that are not type-II markers.
    pub max_outside_type_two: f64,
    pub type_one_count: usize,
    pub type_two_count: usize,
}

/// Leaf cells of the mesh used at one adaptive iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSnapshot {
    pub iteration: usize,
    pub cells: Vec<(usize, Vec<(f64, f64)>)>,
}

#[derive(Debug, Clone)]
pub struct FitReport<S> {
    pub records: Vec<IterationRecord>,
    pub function: SplineFunction<S>,
    pub weights: Vec<f64>,
    pub type_one: Vec<usize>,
    pub type_two: Vec<usize>,
    /// Whether the accuracy requirements were met before the cap.
    pub converged: bool,
    pub meshes: Vec<MeshSnapshot>,
}

impl<S> FitReport<S> {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("at least one iteration")
    }
}

/// Multiplies the weights of the given markers by `α(e_i)`.
pub fn update_weights(
    errors: &[f64],
    weights: &[f64],
    type_one: &[usize],
    type_two: &[usize],
    mode: AlphaMode,
) -> Vec<f64> {
    let mut out = weights.to_vec();
    for &i in type_one {
        out[i] *= mode.factor(Marker::TypeOne, errors[i]);
    }
    for &i in type_two {
        out[i] *= mode.factor(Marker::TypeTwo, errors[i]);
    }
    out
}

fn record(
    iteration: usize,
    dofs: usize,
    errors: &[f64],
    type_one: &[usize],
    type_two: &[usize],
) -> IterationRecord {
    let m = FitMetrics::from_errors(errors.to_vec());
    let (_, max_one) = m.restricted(type_one);
    let mut outside = vec![true; errors.len()];
    for &i in type_two {
        outside[i] = false;
    }
    let max_out = errors
        .iter()
        .zip(&outside)
        .filter(|(_, &o)| o)
        .map(|(e, _)| *e)
        .fold(0.0, f64::max);
    IterationRecord {
        iteration,
        dofs,
        rmse: m.rmse,
        max: m.max,
        max_type_one: max_one,
        max_outside_type_two: max_out,
        type_one_count: type_one.len(),
        type_two_count: type_two.len(),
    }
}

struct Solver {
    design: SparseDesign,
    dense: Option<DMatrix<f64>>,
    penalty: Option<PenaltyMatrix>,
    lambda: f64,
}

impl Solver {
    fn new<S: Tessellated + ?Sized>(
        space: &S,
        cloud: &WeightedPointCloud,
        lambda: f64,
    ) -> Result<Self> {
        let design = SparseDesign::from_basis(space, cloud.sites())?;
        let (dense, penalty) = if lambda > 0.0 {
            (None, Some(assemble_thin_plate(space)?))
        } else {
            (Some(design.to_dense()), None)
        };
        Ok(Self {
            design,
            dense,
            penalty,
            lambda,
        })
    }

    fn solve(&self, weights: &[f64], f: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let c = match (&self.dense, &self.penalty) {
            (Some(b), _) => solve_wls(b, weights, f)?,
            (None, Some(p)) => solve_penalized_design(&self.design, weights, f, p, self.lambda)?,
            (None, None) => unreachable!("solver without a system"),
        };
        let errors = errors_from_values(&self.design.apply(&c), f);
        Ok((c, errors))
    }
}

/// Reweighted least squares with markers in a fixed space.
///
/// Iterates until `max_{K_I} e ≤ tol_one` and `max_{∉K_II} e ≤ tol_two`, the
/// iteration cap is hit, or no marked point is left to reweight (the next
/// solve would repeat the current one).
pub fn rwls_fit<S: Tessellated + Clone>(
    space: &S,
    cloud: &WeightedPointCloud,
    config: &FitConfig,
) -> Result<FitReport<S>> {
    config.validate()?;
    cloud.check_inside(space)?;
    let solver = Solver::new(space, cloud, config.lambda)?;
    let f = cloud.values();
    let type_one = cloud.indices_with(Marker::TypeOne);
    let type_two = cloud.indices_with(Marker::TypeTwo);
    let mut weights = cloud.weights().to_vec();
    let mut records = Vec::new();
    let mut converged = false;
    let mut coefficients;
    let mut iteration = 0;
    loop {
        iteration += 1;
        let (c, errors) = solver.solve(&weights, f)?;
        coefficients = c;
        let rec = record(iteration, space.dim(), &errors, &type_one, &type_two);
        let done = rec.max_type_one <= config.tol_one && rec.max_outside_type_two <= config.tol_two;
        records.push(rec);
        if done {
            converged = true;
            break;
        }
        if iteration >= config.max_iter {
            break;
        }
        let (ones, twos): (Vec<usize>, Vec<usize>) = if config.update_all_marked {
            (type_one.clone(), type_two.clone())
        } else {
            (
                type_one
                    .iter()
                    .copied()
                    .filter(|&i| errors[i] > config.tol_one)
                    .collect(),
                type_two
                    .iter()
                    .copied()
                    .filter(|&i| errors[i] < config.tol_two)
                    .collect(),
            )
        };
        let next = update_weights(&errors, &weights, &ones, &twos, config.alpha);
        if next == weights {
            break;
        }
        weights = next;
    }
    Ok(FitReport {
        records,
        function: SplineFunction::new(space.clone(), coefficients)?,
        weights,
        type_one,
        type_two,
        converged,
        meshes: Vec::new(),
    })
}

/// Indices whose error under the unit-weight least-squares fit exceeds `eps`.
pub fn init_markers_from_ls<S: Basis + ?Sized>(
    space: &S,
    cloud: &WeightedPointCloud,
    eps: f64,
) -> Result<Vec<usize>> {
    let design = SparseDesign::from_basis(space, cloud.sites())?;
    let c = solve_wls(&design.to_dense(), &vec![1.0; cloud.len()], cloud.values())?;
    let errors = errors_from_values(&design.apply(&c), cloud.values());
    Ok((0..cloud.len()).filter(|&i| errors[i] > eps).collect())
}

fn snapshot(h: &HierarchicalSpace, iteration: usize) -> MeshSnapshot {
    MeshSnapshot {
        iteration,
        cells: h
            .leaf_cells()
            .iter()
            .map(|c: &CellId| (c.level, h.cell_bounds(c)))
            .collect(),
    }
}

/// Reweighted adaptive fitting over hierarchical B-splines.
///
/// Each iteration solves the penalized problem on the current space, drops
/// markers that meet their tolerance, reweights the rest, and refines the
/// leaf cells holding points with error above `eps`. Stops when every error
/// is within `eps` or after `max_levels` iterations.
pub fn adaptive_rwls_fit(
    base: &SplineSpace,
    cloud: &WeightedPointCloud,
    config: &FitConfig,
) -> Result<FitReport<HierarchicalSpace>> {
    config.validate()?;
    cloud.check_inside(base)?;
    let f = cloud.values();
    let mut h = HierarchicalSpace::new(base.clone());
    let mut weights = cloud.weights().to_vec();
    let mut type_one = cloud.indices_with(Marker::TypeOne);
    let mut type_two = cloud.indices_with(Marker::TypeTwo);
    let mut records = Vec::new();
    let mut meshes = Vec::new();
    let mut converged = false;
    let mut stagnant = 0;
    let mut iteration = 0;
    let coefficients = loop {
        iteration += 1;
        let solver = Solver::new(&h, cloud, config.lambda)?;
        let (c, errors) = solver.solve(&weights, f)?;
        records.push(record(iteration, h.dim(), &errors, &type_one, &type_two));
        meshes.push(snapshot(&h, iteration));
        if records.last().unwrap().max <= config.eps {
            converged = true;
            break c;
        }
        let mut ones = Vec::new();
        type_one.retain(|&i| {
            let violating = errors[i] > config.tol_one;
            if violating {
                ones.push(i);
            }
            violating
        });
        let mut twos = Vec::new();
        type_two.retain(|&i| {
            let violating = errors[i] < config.tol_two;
            if violating {
                twos.push(i);
            }
            violating
        });
        weights = update_weights(&errors, &weights, &ones, &twos, config.alpha);
        if iteration >= config.max_levels {
            break c;
        }
        let marks = mark_cells(&h, cloud.sites(), &errors, config.eps)?;
        let refined = h.refine(&marks, config.refine)?;
        if refined.dim() == h.dim() {
            stagnant += 1;
            if stagnant >= 2 {
                return Err(Error::Stagnation { level: iteration });
            }
        } else {
            stagnant = 0;
        }
        h = refined;
    };
    Ok(FitReport {
        records,
        function: SplineFunction::new(h, coefficients)?,
        weights,
        type_one,
        type_two,
        converged,
        meshes,
    })
}
