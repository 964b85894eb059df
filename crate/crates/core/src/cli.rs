//! Command-line front end: `verify`, `fit`, `fit-adaptive` and `sample`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cloud::{Marker, WeightedPointCloud};
use crate::decomposition::{decompose_with_cap, DEFAULT_SUBSET_CAP};
use crate::error::{Error, Result};
use crate::fitting::{
    adaptive_rwls_fit, init_markers_from_ls, rwls_fit, AlphaMode, FitConfig, FitReport,
};
use crate::io::{fmt_f64, write_mesh_dump, write_report, Model, PointCloudFile};
use crate::param::{averaging_knots, parameterize, Parameterization};
use crate::spline::{collocation_matrix, Basis, KnotVector, SplineFunction, SplineSpace};
use crate::wls::solve_wls;

/// Reconstruction discrepancy below which `verify` passes.
pub const VERIFY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "rwls",
    version,
    about = "Weighted least-squares spline fitting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rebuild the WLS fit as a convex combination of subset interpolants
    /// and compare it with the direct solve.
    Verify {
        cloud: PathBuf,
        #[command(flatten)]
        space: SpaceArgs,
        /// Largest number of subsets to enumerate.
        #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
        cap: u128,
    },
    /// Reweighted least squares with markers in a fixed space.
    Fit {
        cloud: PathBuf,
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
    },
    /// Reweighted adaptive fitting with hierarchical B-splines.
    FitAdaptive {
        cloud: PathBuf,
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Error threshold for refinement.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Sets tol_I to this multiple of eps.
        #[arg(long)]
        tol_i_ratio: Option<f64>,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        /// Mark as type I every point whose plain least-squares error exceeds eps.
        #[arg(long)]
        auto_markers: bool,
        /// CSV of leaf cells per iteration.
        #[arg(long)]
        mesh_dump: Option<PathBuf>,
    },
    /// Evaluate a model on a uniform grid.
    Sample {
        model: PathBuf,
        /// Points per direction.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Sampling box `a,b[,c,d…]`; defaults to the model domain.
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        /// Add columns with derivatives of this order along each direction.
        #[arg(long)]
        deriv: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisKind {
    Poly,
    Spline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamKind {
    Uniform,
    Chord,
    Given,
}

#[derive(Debug, Clone, Args)]
pub struct SpaceArgs {
    #[arg(long, value_enum, default_value_t = BasisKind::Spline)]
    pub basis: BasisKind,
    /// Degree, or one degree per direction.
    #[arg(long, default_value = "3")]
    pub degree: String,
    /// `uniform`, `averaging`, or explicit knots (`;` between directions).
    #[arg(long, default_value = "uniform", allow_hyphen_values = true)]
    pub knots: String,
    #[arg(long, default_value_t = 0)]
    pub interior_knots: usize,
    /// Uniform mesh `RxC`: spans per direction (overrides --interior-knots).
    #[arg(long)]
    pub mesh: Option<String>,
    /// Domain box `a,b[,c,d…]`; defaults to the bounding box of the sites.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    #[arg(long, value_enum, default_value_t = ParamKind::Given)]
    pub param: ParamKind,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub tol_i: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    pub tol_ii: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// `error`, `fixed:ρ` or `irls:δ`.
    #[arg(long, default_value = "error")]
    pub alpha: String,
    /// Reweight every marked point, not only those still violating.
    #[arg(long)]
    pub update_all_marked: bool,
    /// Model JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration report CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| config_error(format!("invalid {what} '{s}'")))
        })
        .collect()
}

pub fn parse_alpha(s: &str) -> Result<AlphaMode> {
    let num = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| config_error(format!("invalid --alpha '{s}'")))
    };
    match s.split_once(':') {
        None if s == "error" => Ok(AlphaMode::ErrorDriven),
        Some(("fixed", v)) => Ok(AlphaMode::FixedFactor(num(v)?)),
        Some(("irls", v)) => Ok(AlphaMode::Irls { delta: num(v)? }),
        _ => Err(config_error(format!("invalid --alpha '{s}'"))),
    }
}

/// Parses `a,b[,c,d…]` into one interval per direction.
pub fn parse_domain(s: &str) -> Result<Vec<(f64, f64)>> {
    let v: Vec<f64> = parse_list(s, "domain")?;
    if v.is_empty() || !v.len().is_multiple_of(2) {
        return Err(config_error(format!("domain '{s}' needs pairs a,b")));
    }
    Ok(v.chunks(2).map(|c| (c[0], c[1])).collect())
}

impl SpaceArgs {
    /// Loads the cloud, replacing the sites when a parameterization is requested.
    pub fn load_cloud(&self, path: &std::path::Path) -> Result<WeightedPointCloud> {
        let file = PointCloudFile::from_path(path)?;
        let method = match self.param {
            ParamKind::Given => return file.into_cloud(None),
            ParamKind::Uniform => Parameterization::Uniform,
            ParamKind::Chord => Parameterization::Chord,
        };
        let sites = parameterize(&file.values, method)?;
        file.into_cloud(Some((1, sites)))
    }

    pub fn build(&self, cloud: &WeightedPointCloud) -> Result<SplineSpace> {
        let n = cloud.param_dim();
        let mut degrees: Vec<usize> = parse_list(&self.degree, "degree")?;
        if degrees.len() == 1 {
            degrees = vec![degrees[0]; n];
        }
        if degrees.len() != n {
            return Err(config_error(format!(
                "{} degrees for {n} directions",
                degrees.len()
            )));
        }
        let coords = |d: usize| -> Vec<f64> { cloud.sites().map(|x| x[d]).collect() };
        let domains: Vec<(f64, f64)> = match &self.domain {
            Some(s) => parse_domain(s)?,
            None => (0..n)
                .map(|d| {
                    let c = coords(d);
                    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi)
                })
                .collect(),
        };
        if domains.len() != n {
            return Err(config_error(format!(
                "domain has {} directions, data has {n}",
                domains.len()
            )));
        }
        let spans: Vec<usize> = match &self.mesh {
            Some(m) => {
                let v: Vec<usize> = m
                    .split(['x', 'X'])
                    .map(|p| {
                        p.trim()
                            .parse()
                            .map_err(|_| config_error(format!("invalid --mesh '{m}'")))
                    })
                    .collect::<Result<_>>()?;
                let v = if v.len() == 1 { vec![v[0]; n] } else { v };
                if v.len() != n || v.contains(&0) {
                    return Err(config_error(format!("invalid --mesh '{m}'")));
                }
                v
            }
            None => vec![self.interior_knots + 1; n],
        };
        let dirs = match self.basis {
            BasisKind::Poly => degrees
                .iter()
                .zip(&domains)
                .map(|(&d, &dom)| KnotVector::open(dom, d, &[]))
                .collect::<Result<Vec<_>>>()?,
            BasisKind::Spline => match self.knots.as_str() {
                "uniform" => degrees
                    .iter()
                    .zip(&domains)
                    .zip(&spans)
                    .map(|((&d, &dom), &s)| KnotVector::uniform(dom, d, s - 1))
                    .collect::<Result<Vec<_>>>()?,
                "averaging" => (0..n)
                    .map(|d| {
                        let mut c = coords(d);
                        c.sort_by(f64::total_cmp);
                        c.dedup();
                        averaging_knots(&c, spans[d] - 1 + degrees[d] + 1, degrees[d])
                    })
                    .collect::<Result<Vec<_>>>()?,
                list => {
                    let parts: Vec<&str> = list.split(';').collect();
                    if parts.len() != n {
                        return Err(config_error(format!(
                            "{} knot vectors for {n} directions",
                            parts.len()
                        )));
                    }
                    parts
                        .iter()
                        .zip(&degrees)
                        .map(|(p, &d)| KnotVector::new(d, parse_list(p, "knot list")?))
                        .collect::<Result<Vec<_>>>()?
                }
            },
        };
        SplineSpace::new(dirs)
    }
}

impl FitArgs {
    fn config(&self) -> Result<FitConfig> {
        Ok(FitConfig {
            tol_one: self.tol_i,
            tol_two: self.tol_ii,
            lambda: self.lambda,
            alpha: parse_alpha(&self.alpha)?,
            update_all_marked: self.update_all_marked,
            ..FitConfig::default()
        })
    }
}

/// Grid of `count` points per direction over `domains`, last direction fastest.
pub fn grid_points(domains: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    let axis = |&(a, b): &(f64, f64)| -> Vec<f64> {
        if count == 1 {
            return vec![0.5 * (a + b)];
        }
        (0..count)
            .map(|i| {
                if i + 1 == count {
                    b
                } else {
                    a + (b - a) * i as f64 / (count - 1) as f64
                }
            })
            .collect()
    };
    let axes: Vec<Vec<f64>> = domains.iter().map(axis).collect();
    let total = count.pow(domains.len() as u32);
    (0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; axes.len()];
            for d in (0..axes.len()).rev() {
                p[d] = axes[d][flat % count];
                flat /= count;
            }
            p
        })
        .collect()
}

/// Outcome of the `verify` command.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub total: usize,
    pub admissible: usize,
    pub discrepancy: f64,
    pub cauchy_binet_residual: f64,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.discrepancy < VERIFY_TOLERANCE
    }
}

/// Compares the subset reconstruction with the direct WLS fit at the sites and
/// on a grid (101 points in 1D, 21 per direction otherwise). The discrepancy is
/// relative to the largest fitted value, floored at one.
pub fn verify(space: &SplineSpace, cloud: &WeightedPointCloud, cap: u128) -> Result<VerifyOutcome> {
    cloud.check_inside(space)?;
    let dec = decompose_with_cap(space, cloud, cap)?;
    let b = collocation_matrix(space, cloud.sites())?;
    let direct = SplineFunction::new(
        space.clone(),
        solve_wls(&b, cloud.weights(), cloud.values())?,
    )?;
    let per_dir = if space.param_dim() == 1 { 101 } else { 21 };
    let mut points: Vec<Vec<f64>> = cloud.sites().map(<[f64]>::to_vec).collect();
    points.extend(grid_points(&space.bounds(), per_dir));
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for x in &points {
        let u = direct.evaluate(x)?;
        let v = dec.reconstruct(x)?;
        for (a, b) in u.iter().zip(&v) {
            diff = diff.max((a - b).abs());
            scale = scale.max(a.abs());
        }
    }
    Ok(VerifyOutcome {
        total: dec.certificates().len(),
        admissible: dec.admissible_count(),
        discrepancy: diff / scale,
        cauchy_binet_residual: dec.cauchy_binet_residual(),
    })
}

fn write_fit_outputs<S>(
    report: &FitReport<S>,
    args: &FitArgs,
    model: Model,
    out: &mut dyn Write,
) -> Result<()> {
    if let Some(path) = &args.out {
        model.save(path)?;
    }
    if let Some(path) = &args.report {
        write_report(
            &report.records,
            std::io::BufWriter::new(std::fs::File::create(path)?),
        )?;
    }
    let last = report.last();
    writeln!(out, "iterations: {}", report.records.len())?;
    writeln!(out, "converged: {}", report.converged)?;
    writeln!(out, "dofs: {}", last.dofs)?;
    writeln!(out, "rmse: {}", fmt_f64(last.rmse))?;
    writeln!(out, "max: {}", fmt_f64(last.max))?;
    writeln!(out, "max_KI: {}", fmt_f64(last.max_type_one))?;
    writeln!(out, "max_notKII: {}", fmt_f64(last.max_outside_type_two))?;
    Ok(())
}

fn sample(
    model: &Model,
    grid: usize,
    domain: Option<&str>,
    deriv: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let n = model.param_dim();
    let bounds = model.bounds();
    let domains = match domain {
        Some(s) => parse_domain(s)?,
        None => bounds.clone(),
    };
    if domains.len() != n {
        return Err(config_error(format!(
            "domain has {} directions, model has {n}",
            domains.len()
        )));
    }
    if grid == 0 {
        return Err(config_error("--grid must be at least 1"));
    }
    for (&(a, b), &(lo, hi)) in domains.iter().zip(&bounds) {
        if !(a >= lo && b <= hi && a <= b) {
            return Err(Error::OutsideDomain { point: vec![a, b] });
        }
    }
    let dv = model.value_dim();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=dv).map(|k| format!("f{k}")));
    if let Some(r) = deriv {
        for d in 1..=n {
            header.extend((1..=dv).map(|k| format!("d{r}x{d}_f{k}")));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for x in grid_points(&domains, grid) {
        let mut row: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
        row.extend(model.evaluate(&x)?.into_iter().map(fmt_f64));
        if let Some(r) = deriv {
            for d in 0..n {
                let mut order = vec![0; n];
                order[d] = r;
                row.extend(
                    model
                        .evaluate_derivative(&x, &order)?
                        .into_iter()
                        .map(fmt_f64),
                );
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Runs a parsed command, writing its report to `out`. Returns the exit code
/// for a successful run (`verify` returns 2 when the check fails).
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Verify { cloud, space, cap } => {
            let cloud = space.load_cloud(cloud)?;
            let s = space.build(&cloud)?;
            let v = verify(&s, &cloud, *cap)?;
            writeln!(out, "subsets: {}/{} admissible", v.admissible, v.total)?;
            writeln!(out, "max discrepancy: {:.3e}", v.discrepancy)?;
            writeln!(
                out,
                "cauchy-binet residual: {:.3e}",
                v.cauchy_binet_residual
            )?;
            writeln!(out, "{}", if v.passed() { "PASS" } else { "FAIL" })?;
            Ok(if v.passed() { 0 } else { 2 })
        }
        Command::Fit {
            cloud,
            space,
            fit,
            max_iter,
        } => {
            let cloud = space.load_cloud(cloud)?;
            let s = space.build(&cloud)?;
            let config = FitConfig {
                max_iter: *max_iter,
                ..fit.config()?
            };
            let report = rwls_fit(&s, &cloud, &config)?;
            let model = Model::from(report.function.clone());
            write_fit_outputs(&report, fit, model, out)?;
            Ok(0)
        }
        Command::FitAdaptive {
            cloud,
            space,
            fit,
            eps,
            tol_i_ratio,
            levels,
            auto_markers,
            mesh_dump,
        } => {
            let mut cloud = space.load_cloud(cloud)?;
            let s = space.build(&cloud)?;
            let mut config = FitConfig {
                eps: *eps,
                max_levels: *levels,
                ..fit.config()?
            };
            if let Some(r) = tol_i_ratio {
                config.tol_one = r * eps;
            }
            if *auto_markers {
                config.validate()?;
                let marked = init_markers_from_ls(&s, &cloud, *eps)?;
                let mut markers = cloud.markers().to_vec();
                for i in marked {
                    markers[i] = Marker::TypeOne;
                }
                cloud = cloud.with_markers(markers)?;
            }
            let report = adaptive_rwls_fit(&s, &cloud, &config)?;
            if let Some(path) = mesh_dump {
                write_mesh_dump(
                    &report.meshes,
                    cloud.param_dim(),
                    std::io::BufWriter::new(std::fs::File::create(path)?),
                )?;
            }
            let model = Model::from(report.function.clone());
            write_fit_outputs(&report, fit, model, out)?;
            Ok(0)
        }
        Command::Sample {
            model,
            grid,
            domain,
            deriv,
            out: path,
        } => {
            let model = Model::load(model)?;
            match path {
                Some(p) => {
                    let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
                    sample(&model, *grid, domain.as_deref(), *deriv, &mut w)?;
                    w.flush()?;
                }
                None => sample(&model, *grid, domain.as_deref(), *deriv, out)?,
            }
            Ok(0)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 configuration error, 2 numerical failure, 3 I/O or parse error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
