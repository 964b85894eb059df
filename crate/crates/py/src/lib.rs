//! Python bindings for `rwls`.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rwls::decomposition::{self, IrlsExponent};
use rwls::fitting::{self, AlphaMode, FitConfig, IterationRecord};
use rwls::io::Model;
use rwls::{Basis, Marker, WeightedPointCloud};

fn to_py(e: rwls::Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        2 => PyArithmeticError::new_err(msg),
        3 => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(name = "KnotVector", frozen, from_py_object)]
#[derive(Clone)]
struct PyKnotVector(rwls::KnotVector);

#[pymethods]
impl PyKnotVector {
    #[new]
    fn new(degree: usize, knots: Vec<f64>) -> PyResult<Self> {
        rwls::KnotVector::new(degree, knots)
            .map(Self)
            .map_err(to_py)
    }

    /// Open knot vector with `interior` equally spaced interior knots.
    #[staticmethod]
    fn uniform(a: f64, b: f64, degree: usize, interior: usize) -> PyResult<Self> {
        rwls::KnotVector::uniform((a, b), degree, interior)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree()
    }

    #[getter]
    fn knots(&self) -> Vec<f64> {
        self.0.knots().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        self.0.domain()
    }

    /// Nonzero basis values at `x` as `(index, value)` pairs.
    fn eval(&self, x: f64) -> PyResult<Vec<(usize, f64)>> {
        self.0.eval(x).map_err(to_py)
    }

    fn eval_derivative(&self, x: f64, order: usize) -> PyResult<Vec<(usize, f64)>> {
        self.0.eval_derivative(x, order).map_err(to_py)
    }

    fn greville(&self) -> Vec<f64> {
        self.0.greville()
    }

    fn __repr__(&self) -> String {
        format!(
            "KnotVector(degree={}, knots={:?})",
            self.0.degree(),
            self.0.knots()
        )
    }
}

#[pyclass(name = "SplineSpace", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySplineSpace(rwls::SplineSpace);

#[pymethods]
impl PySplineSpace {
    #[new]
    fn new(directions: Vec<PyKnotVector>) -> PyResult<Self> {
        rwls::SplineSpace::new(directions.into_iter().map(|k| k.0).collect())
            .map(Self)
            .map_err(to_py)
    }

    /// Univariate polynomials of `degree` on `[a, b]`.
    #[staticmethod]
    fn polynomial(a: f64, b: f64, degree: usize) -> PyResult<Self> {
        rwls::SplineSpace::polynomial((a, b), degree)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn param_dim(&self) -> usize {
        self.0.param_dim()
    }

    /// Dense collocation matrix at `sites` (one list per site).
    fn collocation(&self, sites: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let b = rwls::spline::collocation_matrix(&self.0, sites.iter().map(Vec::as_slice))
            .map_err(to_py)?;
        Ok(rows(&b))
    }
}

#[pyclass(name = "PointCloud", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPointCloud(WeightedPointCloud);

#[pymethods]
impl PyPointCloud {
    /// `sites` and `values` hold one list per point; markers use 0 plain,
    /// 1 type I, 2 type II.
    #[new]
    #[pyo3(signature = (sites, values, weights=None, markers=None))]
    fn new(
        sites: Vec<Vec<f64>>,
        values: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
        markers: Option<Vec<u8>>,
    ) -> PyResult<Self> {
        let s = matrix(&sites)?;
        let n = s.ncols();
        let flat: Vec<f64> = sites.into_iter().flatten().collect();
        let mut cloud = WeightedPointCloud::new(n, flat, matrix(&values)?).map_err(to_py)?;
        if let Some(w) = weights {
            cloud.set_weights(w).map_err(to_py)?;
        }
        if let Some(mk) = markers {
            let mk = mk
                .into_iter()
                .map(|c| {
                    Marker::from_code(c)
                        .ok_or_else(|| PyValueError::new_err(format!("invalid marker {c}")))
                })
                .collect::<PyResult<Vec<_>>>()?;
            cloud = cloud.with_markers(mk).map_err(to_py)?;
        }
        Ok(Self(cloud))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }
}

#[pyclass(name = "Model", frozen)]
struct PyModel(Model);

#[pymethods]
impl PyModel {
    fn evaluate(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.evaluate(&x).map_err(to_py)
    }

    fn evaluate_derivative(&self, x: Vec<f64>, order: Vec<usize>) -> PyResult<Vec<f64>> {
        self.0.evaluate_derivative(&x, &order).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Model::from_json(text).map(Self).map_err(to_py)
    }
}

#[pyclass(name = "Decomposition", frozen)]
struct PyDecomposition(decomposition::Decomposition<rwls::SplineSpace>);

#[pymethods]
impl PyDecomposition {
    #[getter]
    fn total(&self) -> usize {
        self.0.certificates().len()
    }

    #[getter]
    fn admissible(&self) -> usize {
        self.0.admissible_count()
    }

    #[getter]
    fn normalizer(&self) -> f64 {
        self.0.normalizer()
    }

    #[getter]
    fn gram_determinant(&self) -> f64 {
        self.0.gram_determinant()
    }

    /// Subsets (0-based) with their `λ_K`, admissible ones only.
    fn weights(&self) -> Vec<(Vec<usize>, f64)> {
        self.0
            .admissible()
            .map(|c| (c.subset.clone(), c.lambda))
            .collect()
    }

    fn reconstruct(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.reconstruct(&x).map_err(to_py)
    }
}

#[pyfunction]
fn decompose(space: &PySplineSpace, cloud: &PyPointCloud) -> PyResult<PyDecomposition> {
    decomposition::decompose(&space.0, &cloud.0)
        .map(PyDecomposition)
        .map_err(to_py)
}

/// Weighted least-squares coefficients (one row per basis function).
#[pyfunction]
fn solve_wls(b: Vec<Vec<f64>>, weights: Vec<f64>, f: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let c = rwls::solve_wls(&matrix(&b)?, &weights, &matrix(&f)?).map_err(to_py)?;
    Ok(rows(&c))
}

/// Least-squares fit of `space` to `cloud` with the cloud's weights.
#[pyfunction]
fn fit_wls(space: &PySplineSpace, cloud: &PyPointCloud) -> PyResult<PyModel> {
    let b = rwls::spline::collocation_matrix(&space.0, cloud.0.sites()).map_err(to_py)?;
    let c = rwls::solve_wls(&b, cloud.0.weights(), cloud.0.values()).map_err(to_py)?;
    let f = rwls::SplineFunction::new(space.0.clone(), c).map_err(to_py)?;
    Ok(PyModel(f.into()))
}

#[pyfunction]
#[pyo3(signature = (space, cloud, p, iterations=20, standard=true, delta=1e-8))]
fn irls(
    space: &PySplineSpace,
    cloud: &PyPointCloud,
    p: f64,
    iterations: usize,
    standard: bool,
    delta: f64,
) -> PyResult<(PyModel, Vec<f64>)> {
    let mode = if standard {
        IrlsExponent::Standard
    } else {
        IrlsExponent::Paper
    };
    let r =
        decomposition::irls_solve(&space.0, &cloud.0, p, iterations, mode, delta).map_err(to_py)?;
    Ok((PyModel(r.function.into()), r.objectives))
}

fn parse_alpha(alpha: &str) -> PyResult<AlphaMode> {
    rwls::cli::parse_alpha(alpha).map_err(to_py)
}

fn records<'py>(py: Python<'py>, recs: &[IterationRecord]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    recs.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("iteration", r.iteration)?;
            d.set_item("dofs", r.dofs)?;
            d.set_item("rmse", r.rmse)?;
            d.set_item("max", r.max)?;
            d.set_item("max_KI", r.max_type_one)?;
            d.set_item("max_notKII", r.max_outside_type_two)?;
            Ok(d)
        })
        .collect()
}

/// Reweighted least squares with the cloud's markers. Returns the model and
/// one dict per iteration.
#[pyfunction]
#[pyo3(signature = (space, cloud, tol_i=1e-3, tol_ii=f64::INFINITY, lam=0.0, alpha="error", max_iter=100))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    space: &PySplineSpace,
    cloud: &PyPointCloud,
    tol_i: f64,
    tol_ii: f64,
    lam: f64,
    alpha: &str,
    max_iter: usize,
) -> PyResult<(PyModel, Vec<Bound<'py, PyDict>>)> {
    let config = FitConfig {
        tol_one: tol_i,
        tol_two: tol_ii,
        lambda: lam,
        alpha: parse_alpha(alpha)?,
        max_iter,
        ..FitConfig::default()
    };
    let r = fitting::rwls_fit(&space.0, &cloud.0, &config).map_err(to_py)?;
    Ok((PyModel(r.function.into()), records(py, &r.records)?))
}

/// Adaptive hierarchical fitting starting from `space`.
#[pyfunction]
#[pyo3(signature = (space, cloud, eps, tol_i=None, tol_ii=f64::INFINITY, lam=0.0, alpha="error", levels=5))]
#[allow(clippy::too_many_arguments)]
fn fit_adaptive<'py>(
    py: Python<'py>,
    space: &PySplineSpace,
    cloud: &PyPointCloud,
    eps: f64,
    tol_i: Option<f64>,
    tol_ii: f64,
    lam: f64,
    alpha: &str,
    levels: usize,
) -> PyResult<(PyModel, Vec<Bound<'py, PyDict>>)> {
    let config = FitConfig {
        tol_one: tol_i.unwrap_or(10.0 * eps),
        tol_two: tol_ii,
        eps,
        lambda: lam,
        alpha: parse_alpha(alpha)?,
        max_levels: levels,
        ..FitConfig::default()
    };
    let r = fitting::adaptive_rwls_fit(&space.0, &cloud.0, &config).map_err(to_py)?;
    Ok((PyModel(r.function.into()), records(py, &r.records)?))
}

#[pyfunction]
fn three_peaks(x: f64, y: f64) -> f64 {
    rwls::testfns::three_peaks(x, y)
}

#[pyfunction]
fn test_curve(id: u8, x: f64) -> PyResult<f64> {
    rwls::testfns::test_curve(id, x).map_err(to_py)
}

#[pymodule]
fn rwls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKnotVector>()?;
    m.add_class::<PySplineSpace>()?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(solve_wls, m)?)?;
    m.add_function(wrap_pyfunction!(fit_wls, m)?)?;
    m.add_function(wrap_pyfunction!(irls, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_adaptive, m)?)?;
    m.add_function(wrap_pyfunction!(three_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(test_curve, m)?)?;
    Ok(())
}
