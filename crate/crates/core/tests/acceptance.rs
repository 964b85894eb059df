//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

mod common;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use common::*;
use rwls::cloud::Marker;
use rwls::decomposition::{decompose, irls_solve, weight_limit_solution, IrlsExponent};
use rwls::fitting::{adaptive_rwls_fit, init_markers_from_ls, rwls_fit, AlphaMode, FitConfig};
use rwls::hierarchical::{CellId, HierarchicalSpace, RefineOptions};
use rwls::io::Model;
use rwls::param::averaging_knots;
use rwls::spline::{collocation_matrix, schoenberg_whitney_admissible};
use rwls::testfns::{feature_markers, three_peaks, FeatureDensity, TestCurve};
use rwls::{Basis, KnotVector, SplineFunction, SplineSpace, WeightedPointCloud};

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn seven_cloud(seed: u64) -> WeightedPointCloud {
    let mut r = rng(seed);
    let w = open_unit_weights(&mut r, 7);
    WeightedPointCloud::from_xy(&SEVEN_X, &SEVEN_F)
        .unwrap()
        .with_weights(w)
        .unwrap()
}

fn seven_spline_space() -> SplineSpace {
    SplineSpace::univariate(KnotVector::new(2, SEVEN_KNOTS.to_vec()).unwrap())
}

fn grid101() -> Vec<f64> {
    (0..101).map(|i| -5.0 + 0.1 * i as f64).collect()
}

/// Direct WLS fit of the seven points evaluated by the oracle: monomials for
/// the polynomial case, Cox–de Boor for the spline case.
enum Oracle {
    Poly,
    Spline,
}

impl Oracle {
    fn row(&self, x: f64, r: usize) -> Vec<f64> {
        match self {
            Oracle::Poly => monomial_row(2, x, r),
            Oracle::Spline => basis_row(&SEVEN_KNOTS, 2, x, r),
        }
    }

    fn design(&self) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = SEVEN_X.iter().map(|&x| self.row(x, 0)).collect();
        matrix_from_rows(&rows)
    }

    fn fit(&self, w: &[f64]) -> Vec<f64> {
        normal_equations(&self.design(), w, &SEVEN_F)
            .iter()
            .copied()
            .collect()
    }

    fn eval(&self, c: &[f64], x: f64, r: usize) -> f64 {
        self.row(x, r).iter().zip(c).map(|(a, b)| a * b).sum()
    }
}

fn max_rel_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
    diff / scale
}

#[test]
fn criterion_01_polynomial_decomposition() {
    let start = Instant::now();
    let cloud = seven_cloud(1);
    let space = SplineSpace::polynomial((-5.0, 5.0), 2).unwrap();
    let dec = decompose(&space, &cloud).unwrap();
    let coeffs = Oracle::Poly.fit(cloud.weights());
    let xs = grid101();
    let recon: Vec<f64> = xs
        .iter()
        .map(|&x| dec.reconstruct(&[x]).unwrap()[0])
        .collect();
    let direct: Vec<f64> = xs
        .iter()
        .map(|&x| Oracle::Poly.eval(&coeffs, x, 0))
        .collect();
    let disc = max_rel_discrepancy(&recon, &direct);
    let elapsed = start.elapsed();
    let counts = (dec.admissible_count(), dec.certificates().len());
    verdict(
        1,
        "polynomial decomposition",
        counts == (35, 35) && disc < 1e-9 && elapsed < Duration::from_secs(1),
        format!(
            "{}/{} admissible, max rel discrepancy {disc:.2e}, {elapsed:.2?}",
            counts.0, counts.1
        ),
    );
}

#[test]
fn criterion_02_spline_decomposition() {
    let start = Instant::now();
    let cloud = seven_cloud(2);
    let space = seven_spline_space();
    let dec = decompose(&space, &cloud).unwrap();
    let first_five: Vec<usize> = (0..5).collect();
    let cert = dec
        .certificates()
        .iter()
        .find(|c| c.subset == first_five)
        .unwrap();
    let sw = schoenberg_whitney_admissible(space.direction(0), &SEVEN_X[..5]).unwrap();
    let oracle_singular = minor_is_singular(&Oracle::Spline.design().select_rows(&first_five));
    let oracle_admissible = subsets(7, 5)
        .iter()
        .filter(|k| !minor_is_singular(&Oracle::Spline.design().select_rows(k.as_slice())))
        .count();

    let coeffs = Oracle::Spline.fit(cloud.weights());
    let xs = grid101();
    let recon: Vec<f64> = xs
        .iter()
        .map(|&x| dec.reconstruct(&[x]).unwrap()[0])
        .collect();
    let direct: Vec<f64> = xs
        .iter()
        .map(|&x| Oracle::Spline.eval(&coeffs, x, 0))
        .collect();
    let disc = max_rel_discrepancy(&recon, &direct);
    let elapsed = start.elapsed();
    let pass = dec.admissible_count() == 20
        && dec.certificates().len() == 21
        && oracle_admissible == 20
        && !cert.admissible
        && !sw
        && oracle_singular
        && disc < 1e-9
        && elapsed < Duration::from_secs(1);
    verdict(
        2,
        "spline decomposition",
        pass,
        format!(
            "{}/{} admissible, K={{1..5}} rejected by SW: {}, by determinant: {}, max rel discrepancy {disc:.2e}, {elapsed:.2?}",
            dec.admissible_count(),
            dec.certificates().len(),
            !sw,
            oracle_singular
        ),
    );
}

#[test]
fn criterion_03_cauchy_binet() {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let mut spline_instances = 0;
    while instances < 50 {
        let m = r.random_range(2..=10);
        let n = r.random_range(1..=6.min(m));
        let mut xs: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1.0)).collect();
        xs.sort_by(f64::total_cmp);
        let fs: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let w = open_unit_weights(&mut r, m);
        let degree = r.random_range(0..n);
        let interior = n - degree - 1;
        let mut inner: Vec<f64> = (0..interior).map(|_| r.random_range(0.05..0.95)).collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        if inner.len() != interior {
            continue;
        }
        let kv = KnotVector::open((0.0, 1.0), degree, &inner).unwrap();
        let knots = kv.knots().to_vec();
        let space = SplineSpace::univariate(kv);
        let cloud = WeightedPointCloud::from_xy(&xs, &fs)
            .unwrap()
            .with_weights(w.clone())
            .unwrap();
        let rows: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| basis_row(&knots, degree, x, 0))
            .collect();
        let b = matrix_from_rows(&rows);
        let wm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w));
        let gram_det = (b.transpose() * wm * &b).determinant();
        let lambda_sum = match decompose(&space, &cloud) {
            Ok(dec) => dec.normalizer(),
            Err(rwls::Error::RankDeficient) => 0.0,
            Err(e) => panic!("{e}"),
        };
        let scale: f64 = b.column_iter().map(|c| c.norm_squared()).product();
        let err = if lambda_sum == 0.0 {
            gram_det.abs() / scale
        } else {
            (lambda_sum - gram_det).abs() / gram_det.abs()
        };
        worst = worst.max(err);
        instances += 1;
        if interior > 0 {
            spline_instances += 1;
        }
    }
    verdict(
        3,
        "Cauchy-Binet",
        worst < 1e-8,
        format!("{instances} instances ({spline_instances} with interior knots), worst rel error {worst:.2e}"),
    );
}

#[test]
fn criterion_04_weight_limits() {
    let start = Instant::now();
    let cloud = seven_cloud(4);
    let scale = cloud.data_scale();
    let mut worst_interp: f64 = 0.0;
    let mut subsets_checked = 0;
    let poly = SplineSpace::polynomial((-5.0, 5.0), 2).unwrap();
    let spline = seven_spline_space();
    for space in [&poly, &spline] {
        let dec = decompose(space, &cloud).unwrap();
        for cert in dec.admissible() {
            let f = weight_limit_solution(space, &cloud, &cert.subset, 1e12).unwrap();
            for &i in &cert.subset {
                let e = (f.evaluate(&[SEVEN_X[i]]).unwrap()[0] - SEVEN_F[i]).abs();
                worst_interp = worst_interp.max(e / scale);
            }
            subsets_checked += 1;
        }
    }

    let xs = grid101();
    let mut worst_single: f64 = 0.0;
    for (oracle, space) in [(Oracle::Poly, &poly), (Oracle::Spline, &spline)] {
        let b = oracle.design();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| oracle.row(x, 0)).collect();
        for i in 0..7 {
            let (limit, _) = brute_force_combination(&b, cloud.weights(), &SEVEN_F, &[i], &rows);
            let f = weight_limit_solution(space, &cloud, &[i], 1e10).unwrap();
            let fitted: Vec<f64> = xs.iter().map(|&x| f.evaluate(&[x]).unwrap()[0]).collect();
            worst_single = worst_single.max(max_rel_discrepancy(&fitted, &limit));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        4,
        "weight limits",
        worst_interp < 1e-6 && worst_single < 1e-6 && elapsed < Duration::from_secs(5),
        format!(
            "{subsets_checked} full subsets, worst interpolation error {worst_interp:.2e} x scale; single-point limit discrepancy {worst_single:.2e}; {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_05_derivative_identity_and_bounds() {
    let mut r = rng(5);
    let cloud = seven_cloud(5);
    let poly = SplineSpace::polynomial((-5.0, 5.0), 2).unwrap();
    let spline = seven_spline_space();
    let points: Vec<f64> = (0..100).map(|_| r.random_range(-5.0..5.0)).collect();
    let mut worst_identity: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    for (oracle, space) in [(Oracle::Poly, &poly), (Oracle::Spline, &spline)] {
        let dec = decompose(space, &cloud).unwrap();
        let coeffs = oracle.fit(cloud.weights());
        for order in 0..=2 {
            let direct: Vec<f64> = points
                .iter()
                .map(|&x| oracle.eval(&coeffs, x, order))
                .collect();
            let recon: Vec<f64> = points
                .iter()
                .map(|&x| dec.reconstruct_derivative(&[x], &[order]).unwrap()[0])
                .collect();
            let scale = direct
                .iter()
                .fold(0.0f64, |s, v| s.max(v.abs()))
                .max(1e-300);
            worst_identity = worst_identity.max(max_rel_discrepancy(&recon, &direct));
            for (&x, &d) in points.iter().zip(&direct) {
                let (lo, hi) = dec.derivative_bounds(&[x], &[order]).unwrap();
                let violation = (lo[0] - d).max(d - hi[0]).max(0.0) / scale;
                worst_bound = worst_bound.max(violation);
            }
        }
    }
    verdict(
        5,
        "derivative identity and bounds",
        worst_identity < 1e-8 && worst_bound < 1e-8,
        format!(
            "orders 0..2 at 100 points: identity rel error {worst_identity:.2e}, bound violation {worst_bound:.2e}"
        ),
    );
}

#[test]
fn criterion_06_irls_objective() {
    let cloud = WeightedPointCloud::from_xy(&SEVEN_X, &SEVEN_F).unwrap();
    let poly = SplineSpace::polynomial((-5.0, 5.0), 2).unwrap();
    let spline = seven_spline_space();
    let mut details = Vec::new();
    let mut pass = true;
    for (name, space) in [("poly", &poly), ("spline", &spline)] {
        let res = irls_solve(space, &cloud, 1.5, 20, IrlsExponent::Standard, 1e-12).unwrap();
        let obj = &res.objectives;
        let monotone = obj.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let improved = obj[obj.len() - 1] <= obj[0];
        pass &= obj.len() == 21 && monotone && improved;
        details.push(format!(
            "{name}: {:.6} -> {:.6}, monotone {monotone}",
            obj[0],
            obj[obj.len() - 1]
        ));
    }
    verdict(6, "IRLS objective", pass, details.join("; "));
}

#[test]
fn criterion_07_curve_rwls() {
    let mut details = Vec::new();
    let mut pass = true;
    for curve in [
        TestCurve::AbsSine,
        TestCurve::Gaussian,
        TestCurve::TanhCosine,
    ] {
        let start = Instant::now();
        let (m, interior) = curve.experiment_setup();
        let xs = FeatureDensity::for_curve(curve).sites(m);
        let ys: Vec<f64> = xs.iter().map(|&x| curve.eval(x)).collect();
        let space = SplineSpace::univariate(averaging_knots(&xs, interior + 4, 3).unwrap());
        let marked = feature_markers(&xs, &ys, curve.features(), 0.05, 3);
        let mut markers = vec![Marker::Plain; m];
        for &i in &marked {
            markers[i] = Marker::TypeOne;
        }
        let cloud = WeightedPointCloud::from_xy(&xs, &ys)
            .unwrap()
            .with_markers(markers)
            .unwrap();
        let config = FitConfig {
            tol_one: 5e-5,
            alpha: AlphaMode::FixedFactor(1.25),
            max_iter: 100,
            ..FitConfig::default()
        };
        let report = rwls_fit(&space, &cloud, &config).unwrap();
        let ls = report.records[0].max_type_one;
        let last = report.last();
        let elapsed = start.elapsed();
        let ok = report.records.len() <= 100
            && last.max_type_one < 1e-4
            && ls >= 10.0 * last.max_type_one
            && elapsed < Duration::from_secs(10);
        pass &= ok;
        details.push(format!(
            "{curve:?}: {} markers, LS {ls:.2e} -> rWLS {:.2e} in {} iterations, {elapsed:.2?}",
            marked.len(),
            last.max_type_one,
            report.records.len()
        ));
    }
    verdict(7, "curve rWLS", pass, details.join("; "));
}

fn three_peaks_cloud(g: usize) -> WeightedPointCloud {
    let mut sites = Vec::with_capacity(2 * g * g);
    let mut values = Vec::with_capacity(g * g);
    for i in 0..g {
        for j in 0..g {
            let x = -1.0 + 2.0 * i as f64 / (g - 1) as f64;
            let y = -1.0 + 2.0 * j as f64 / (g - 1) as f64;
            sites.extend([x, y]);
            values.push(three_peaks(x, y));
        }
    }
    WeightedPointCloud::new(2, sites, DMatrix::from_column_slice(g * g, 1, &values)).unwrap()
}

fn bicubic(spans: usize) -> SplineSpace {
    let kv = KnotVector::uniform((-1.0, 1.0), 3, spans - 1).unwrap();
    SplineSpace::new(vec![kv.clone(), kv]).unwrap()
}

#[test]
fn criterion_08_adaptive_rwls() {
    let start = Instant::now();
    let eps = 1e-3;
    let base = bicubic(15);
    let cloud = three_peaks_cloud(100);
    let marked = init_markers_from_ls(&base, &cloud, eps).unwrap();
    let mut markers = vec![Marker::Plain; cloud.len()];
    for &i in &marked {
        markers[i] = Marker::TypeOne;
    }
    let cloud = cloud.with_markers(markers).unwrap();
    let run = |rho: f64| {
        let config = FitConfig {
            eps,
            tol_one: 10.0 * eps,
            lambda: 1e-6,
            alpha: AlphaMode::FixedFactor(rho),
            max_levels: 5,
            ..FitConfig::default()
        };
        adaptive_rwls_fit(&base, &cloud, &config).unwrap()
    };
    let rw = run(1.25);
    let ls = run(1.0);
    let maxes: Vec<f64> = rw.records.iter().map(|r| r.max).collect();
    let decreasing = maxes.len() >= 3 && maxes.windows(2).all(|w| w[1] < w[0]);
    let (a, b) = (rw.last(), ls.last());
    let dof_gap = (a.dofs as f64 - b.dofs as f64).abs() / b.dofs as f64;
    let elapsed = start.elapsed();
    let pass =
        decreasing && dof_gap <= 0.05 && a.max <= b.max && elapsed < Duration::from_secs(120);
    let trace: Vec<String> = rw
        .records
        .iter()
        .map(|r| format!("{}:{:.2e}", r.dofs, r.max))
        .collect();
    verdict(
        8,
        "adaptive rWLS",
        pass,
        format!(
            "|K_I| = {}, rWLS dofs:MAX {}; final rWLS {} dofs MAX {:.3e} vs LS {} dofs MAX {:.3e}; {elapsed:.2?}",
            marked.len(),
            trace.join(" "),
            a.dofs,
            a.max,
            b.dofs,
            b.max
        ),
    );
}

#[test]
fn criterion_09_weight_influence() {
    let start = Instant::now();
    let cloud = three_peaks_cloud(64);
    // hierarchical space of a few hundred functions from unweighted refinement
    let refine = FitConfig {
        eps: 1e-2,
        alpha: AlphaMode::FixedFactor(1.0),
        max_levels: 4,
        ..FitConfig::default()
    };
    let space = adaptive_rwls_fit(&bicubic(8), &cloud, &refine)
        .unwrap()
        .function
        .space()
        .clone();
    let k = init_markers_from_ls(&space, &cloud, 5e-4).unwrap();
    let b = collocation_matrix(&space, cloud.sites()).unwrap();
    let sweep = [1.0, 2.0, 4.0, 6.0, 10.0, 100.0];
    let maxes: Vec<f64> = sweep
        .iter()
        .map(|&wg| {
            let mut w = vec![1.0; cloud.len()];
            for &i in &k {
                w[i] = wg;
            }
            let c = rwls::solve_wls(&b, &w, cloud.values()).unwrap();
            (&b * c - cloud.values()).amax()
        })
        .collect();
    let best = (0..sweep.len())
        .min_by(|&i, &j| maxes[i].total_cmp(&maxes[j]))
        .unwrap();
    let elapsed = start.elapsed();
    let pass = best > 0
        && best < sweep.len() - 1
        && maxes[sweep.len() - 1] > maxes[0]
        && elapsed < Duration::from_secs(60);
    let table: Vec<String> = sweep
        .iter()
        .zip(&maxes)
        .map(|(w, m)| format!("{w}:{m:.3e}"))
        .collect();
    verdict(
        9,
        "weight influence",
        pass,
        format!(
            "n = {}, |K| = {}, MAX by weight {}; minimum at {}; {elapsed:.2?}",
            space.dim(),
            k.len(),
            table.join(" "),
            sweep[best]
        ),
    );
}

#[test]
fn criterion_10_serialization() {
    let mut r = rng(10);
    let kx = KnotVector::open((-1.0, 2.0), 3, &[-0.3, 0.4, 0.41, 1.2]).unwrap();
    let ky = KnotVector::uniform((0.0, 1.0), 2, 5).unwrap();
    let tensor = SplineSpace::new(vec![kx, ky]).unwrap();
    let coeffs = DMatrix::from_fn(tensor.dim(), 2, |_, _| r.random_range(-1.0..1.0) / 3.0);
    let tensor_model = Model::from(SplineFunction::new(tensor.clone(), coeffs).unwrap());

    let h = HierarchicalSpace::new(tensor.clone());
    let h = h
        .refine(
            &[
                CellId {
                    level: 0,
                    index: vec![1, 2],
                },
                CellId {
                    level: 0,
                    index: vec![3, 4],
                },
            ],
            RefineOptions::default(),
        )
        .unwrap();
    let h = h
        .refine(
            &[CellId {
                level: 1,
                index: vec![3, 5],
            }],
            RefineOptions { buffer: 0 },
        )
        .unwrap();
    let coeffs = DMatrix::from_fn(h.dim(), 1, |_, _| r.random_range(-1.0..1.0) * 1e3 / 7.0);
    let levels = h.num_levels();
    let hier_model = Model::from(SplineFunction::new(h, coeffs).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let mut worst: f64 = 0.0;
    for (name, model) in [("tensor", &tensor_model), ("hierarchical", &hier_model)] {
        let path = dir.path().join(format!("{name}.json"));
        model.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        for _ in 0..1000 {
            let x = [r.random_range(-1.0..2.0), r.random_range(0.0..1.0)];
            let a = model.evaluate(&x).unwrap();
            let b = back.evaluate(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    verdict(
        10,
        "serialization",
        worst <= 1e-12 && levels == 3,
        format!("1000 points per model (tensor, hierarchical with {levels} levels), max difference {worst:.1e}"),
    );
}
