//! File formats: point-cloud CSV, model JSON, iteration reports and mesh dumps.
//!
//! Text floats are written with 17 significant digits (`{:.16e}`) in CSV;
//! JSON uses the shortest representation that round-trips exactly.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cloud::{Marker, WeightedPointCloud};
use crate::error::{Error, Result};
use crate::fitting::{IterationRecord, MeshSnapshot};
use crate::hierarchical::HierarchicalSpace;
use crate::spline::{Basis, KnotVector, SplineFunction, SplineSpace};

/// Raw contents of a point-cloud CSV file.
///
/// Columns are `x1..xN`, `f1..fD`, then optional `w` and `marker`
/// (0 plain, 1 type I, 2 type II). `N` may be zero when parameters are to be
/// computed from the values.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudFile {
    pub param_dim: usize,
    /// Row-major `m × N`.
    pub sites: Vec<f64>,
    pub values: DMatrix<f64>,
    pub weights: Option<Vec<f64>>,
    pub markers: Option<Vec<Marker>>,
}

enum Column {
    X(usize),
    F(usize),
    W,
    Marker,
}

fn parse_header(fields: &csv::StringRecord, line: usize) -> Result<Vec<Column>> {
    let err = |message: String| Error::Parse { line, message };
    let mut cols = Vec::with_capacity(fields.len());
    for name in fields.iter() {
        let col = match name {
            "w" => Column::W,
            "marker" => Column::Marker,
            _ => {
                let (kind, idx) = name.split_at(name.len().min(1));
                let idx: usize = idx
                    .parse()
                    .ok()
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| err(format!("unknown column '{name}'")))?;
                match kind {
                    "x" => Column::X(idx - 1),
                    "f" => Column::F(idx - 1),
                    _ => return Err(err(format!("unknown column '{name}'"))),
                }
            }
        };
        cols.push(col);
    }
    let count = |pred: &dyn Fn(&Column) -> bool| cols.iter().filter(|c| pred(c)).count();
    let n = count(&|c| matches!(c, Column::X(_)));
    let d = count(&|c| matches!(c, Column::F(_)));
    for i in 0..n {
        if !cols.iter().any(|c| matches!(c, Column::X(j) if *j == i)) {
            return Err(err(format!("columns x1..x{n} must each appear once")));
        }
    }
    for i in 0..d {
        if !cols.iter().any(|c| matches!(c, Column::F(j) if *j == i)) {
            return Err(err(format!("columns f1..f{d} must each appear once")));
        }
    }
    if d == 0 {
        return Err(err("no value columns f1..fD".into()));
    }
    if count(&|c| matches!(c, Column::W)) > 1 || count(&|c| matches!(c, Column::Marker)) > 1 {
        return Err(err("duplicate w or marker column".into()));
    }
    Ok(cols)
}

impl PointCloudFile {
    pub fn read<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        // csv record offsets can point at comment lines preceding the record
        let line_at = |byte: u64| {
            let mut start = byte as usize;
            while text[start..].starts_with('#') || text[start..].starts_with('\n') {
                match text[start..].find('\n') {
                    Some(nl) => start += nl + 1,
                    None => break,
                }
            }
            1 + text.as_bytes()[..start]
                .iter()
                .filter(|&&b| b == b'\n')
                .count()
        };
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| csv_parse_error(e, &line_at))?
            .clone();
        let header_line = header.position().map_or(1, |p| line_at(p.byte()));
        let cols = parse_header(&header, header_line)?;
        let n = cols.iter().filter(|c| matches!(c, Column::X(_))).count();
        let d = cols.iter().filter(|c| matches!(c, Column::F(_))).count();
        let has_w = cols.iter().any(|c| matches!(c, Column::W));
        let has_marker = cols.iter().any(|c| matches!(c, Column::Marker));

        let mut sites = Vec::new();
        let mut values = Vec::new();
        let mut weights = Vec::new();
        let mut markers = Vec::new();
        let mut record = csv::StringRecord::new();
        loop {
            let more = rdr
                .read_record(&mut record)
                .map_err(|e| csv_parse_error(e, &line_at))?;
            if !more {
                break;
            }
            let line = record.position().map_or(0, |p| line_at(p.byte()));
            let err = |message: String| Error::Parse { line, message };
            if record.len() != cols.len() {
                return Err(err(format!(
                    "expected {} fields, found {}",
                    cols.len(),
                    record.len()
                )));
            }
            let mut x = vec![0.0; n];
            let mut f = vec![0.0; d];
            for (col, field) in cols.iter().zip(record.iter()) {
                match col {
                    Column::Marker => {
                        let code: u8 = field
                            .parse()
                            .map_err(|_| err(format!("invalid marker '{field}'")))?;
                        markers.push(
                            Marker::from_code(code)
                                .ok_or_else(|| err(format!("marker {code} not in {{0, 1, 2}}")))?,
                        );
                    }
                    _ => {
                        let v: f64 = field
                            .parse()
                            .map_err(|_| err(format!("invalid number '{field}'")))?;
                        if !v.is_finite() {
                            return Err(err(format!("non-finite value '{field}'")));
                        }
                        match col {
                            Column::X(i) => x[*i] = v,
                            Column::F(i) => f[*i] = v,
                            Column::W if v > 0.0 => weights.push(v),
                            Column::W => return Err(err(format!("weight {v} is not positive"))),
                            Column::Marker => unreachable!(),
                        }
                    }
                }
            }
            sites.extend(x);
            values.extend(f);
        }
        let m = values.len() / d;
        if m == 0 {
            return Err(Error::Parse {
                line: header_line,
                message: "no data rows".into(),
            });
        }
        Ok(Self {
            param_dim: n,
            sites,
            values: DMatrix::from_row_slice(m, d, &values),
            weights: has_w.then_some(weights),
            markers: has_marker.then_some(markers),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Converts to a cloud, using `sites` (row-major, `param_dim` columns)
    /// in place of the file's coordinates when given.
    pub fn into_cloud(self, sites: Option<(usize, Vec<f64>)>) -> Result<WeightedPointCloud> {
        let (n, s) = sites.unwrap_or((self.param_dim, self.sites));
        if n == 0 {
            return Err(Error::InvalidArgument(
                "the file has no x columns; choose a parameterization".into(),
            ));
        }
        let mut cloud = WeightedPointCloud::new(n, s, self.values)?;
        if let Some(w) = self.weights {
            cloud.set_weights(w)?;
        }
        if let Some(mk) = self.markers {
            cloud = cloud.with_markers(mk)?;
        }
        Ok(cloud)
    }
}

fn csv_parse_error(e: csv::Error, line_at: &dyn Fn(u64) -> usize) -> Error {
    let line = e.position().map_or(0, |p| line_at(p.byte()));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a cloud with `x`, `f`, `w` and `marker` columns.
pub fn write_cloud<W: Write>(cloud: &WeightedPointCloud, mut out: W) -> Result<()> {
    let mut header: Vec<String> = (1..=cloud.param_dim()).map(|i| format!("x{i}")).collect();
    header.extend((1..=cloud.value_dim()).map(|i| format!("f{i}")));
    header.push("w".into());
    header.push("marker".into());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..cloud.len() {
        let mut row: Vec<String> = cloud.site(i).iter().map(|&v| fmt_f64(v)).collect();
        row.extend(cloud.values().row(i).iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(cloud.weights()[i]));
        row.push(cloud.markers()[i].code().to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// A fitted model: tensor-product or hierarchical.
#[derive(Debug, Clone)]
pub enum Model {
    Tensor(SplineFunction<SplineSpace>),
    Hierarchical(SplineFunction<HierarchicalSpace>),
}

impl From<SplineFunction<SplineSpace>> for Model {
    fn from(f: SplineFunction<SplineSpace>) -> Self {
        Model::Tensor(f)
    }
}

impl From<SplineFunction<HierarchicalSpace>> for Model {
    fn from(f: SplineFunction<HierarchicalSpace>) -> Self {
        Model::Hierarchical(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    degree: Vec<usize>,
    knots: Vec<Vec<f64>>,
    coefficients: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<usize>,
    /// Cells of `Ω^1, Ω^2, …` (the base level covers the whole domain).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subdomains: Option<Vec<Vec<Vec<usize>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    active: Option<Vec<Vec<usize>>>,
}

fn coefficient_rows(c: &DMatrix<f64>) -> Vec<Vec<f64>> {
    c.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Model {
    pub fn param_dim(&self) -> usize {
        match self {
            Model::Tensor(f) => f.space().param_dim(),
            Model::Hierarchical(f) => f.space().param_dim(),
        }
    }

    pub fn value_dim(&self) -> usize {
        match self {
            Model::Tensor(f) => f.value_dim(),
            Model::Hierarchical(f) => f.value_dim(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Tensor(f) => f.space().dim(),
            Model::Hierarchical(f) => f.space().dim(),
        }
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Model::Tensor(f) => f.space().bounds(),
            Model::Hierarchical(f) => f.space().bounds(),
        }
    }

    pub fn degrees(&self) -> Vec<usize> {
        match self {
            Model::Tensor(f) => f.space().degrees(),
            Model::Hierarchical(f) => f.space().degrees(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Tensor(f) => f.evaluate(x),
            Model::Hierarchical(f) => f.evaluate(x),
        }
    }

    pub fn evaluate_derivative(&self, x: &[f64], order: &[usize]) -> Result<Vec<f64>> {
        match self {
            Model::Tensor(f) => f.evaluate_derivative(x, order),
            Model::Hierarchical(f) => f.evaluate_derivative(x, order),
        }
    }

    fn to_file(&self) -> ModelFile {
        let (base, coefficients) = match self {
            Model::Tensor(f) => (f.space(), f.coefficients()),
            Model::Hierarchical(f) => (f.space().base(), f.coefficients()),
        };
        let mut file = ModelFile {
            kind: "tensor".into(),
            degree: base.directions().iter().map(|k| k.degree()).collect(),
            knots: base
                .directions()
                .iter()
                .map(|k| k.knots().to_vec())
                .collect(),
            coefficients: coefficient_rows(coefficients),
            levels: None,
            subdomains: None,
            active: None,
        };
        if let Model::Hierarchical(f) = self {
            let h = f.space();
            file.kind = "hierarchical".into();
            file.levels = Some(h.num_levels());
            file.subdomains = Some((1..h.num_levels()).map(|l| h.subdomain_cells(l)).collect());
            file.active = Some((0..h.num_levels()).map(|l| h.active(l).to_vec()).collect());
        }
        file
    }

    fn from_file(file: ModelFile) -> Result<Self> {
        if file.degree.len() != file.knots.len() || file.degree.is_empty() {
            return Err(Error::InvalidArgument(
                "model needs one degree per knot vector".into(),
            ));
        }
        let dirs = file
            .degree
            .iter()
            .zip(file.knots)
            .map(|(&d, k)| KnotVector::new(d, k))
            .collect::<Result<Vec<_>>>()?;
        let base = SplineSpace::new(dirs)?;
        let value_dim = file.coefficients.first().map_or(0, Vec::len);
        if value_dim == 0 || file.coefficients.iter().any(|r| r.len() != value_dim) {
            return Err(Error::Dimension("ragged or empty coefficient rows".into()));
        }
        let flat: Vec<f64> = file.coefficients.iter().flatten().copied().collect();
        let coefficients = DMatrix::from_row_slice(file.coefficients.len(), value_dim, &flat);
        match file.kind.as_str() {
            "tensor" => Ok(Model::Tensor(SplineFunction::new(base, coefficients)?)),
            "hierarchical" => {
                let subdomains = file.subdomains.unwrap_or_default();
                let h = HierarchicalSpace::from_subdomains(base, &subdomains)?;
                if let Some(levels) = file.levels {
                    if levels != h.num_levels() {
                        return Err(Error::InvalidArgument(format!(
                            "model declares {levels} levels, subdomains give {}",
                            h.num_levels()
                        )));
                    }
                }
                if let Some(active) = file.active {
                    let rebuilt: Vec<&[usize]> = (0..h.num_levels()).map(|l| h.active(l)).collect();
                    if active.len() != rebuilt.len()
                        || active.iter().zip(&rebuilt).any(|(a, b)| a.as_slice() != *b)
                    {
                        return Err(Error::InvalidArgument(
                            "active lists disagree with the subdomains".into(),
                        ));
                    }
                }
                Ok(Model::Hierarchical(SplineFunction::new(h, coefficients)?))
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind '{other}'"
            ))),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_file())?;
        writeln!(out)?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        Self::from_file(serde_json::from_reader(reader)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::read(s.as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// One row per iteration: `iteration,dofs,rmse,max,max_KI,max_notKII`.
pub fn write_report<W: Write>(records: &[IterationRecord], mut out: W) -> Result<()> {
    writeln!(out, "iteration,dofs,rmse,max,max_KI,max_notKII")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            r.dofs,
            fmt_f64(r.rmse),
            fmt_f64(r.max),
            fmt_f64(r.max_type_one),
            fmt_f64(r.max_outside_type_two)
        )?;
    }
    Ok(())
}

/// One row per leaf cell: `iteration,level,x0,y0,…,x1,y1,…` (lower corner,
/// then upper corner).
pub fn write_mesh_dump<W: Write>(
    meshes: &[MeshSnapshot],
    param_dim: usize,
    mut out: W,
) -> Result<()> {
    let axes: Vec<String> = match param_dim {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        n => (1..=n).map(|i| format!("x{i}_")).collect(),
    };
    let mut header = vec!["iteration".to_string(), "level".to_string()];
    header.extend(axes.iter().map(|a| format!("{a}0")));
    header.extend(axes.iter().map(|a| format!("{a}1")));
    writeln!(out, "{}", header.join(","))?;
    for mesh in meshes {
        for (level, bounds) in &mesh.cells {
            let mut row = vec![mesh.iteration.to_string(), level.to_string()];
            row.extend(bounds.iter().map(|b| fmt_f64(b.0)));
            row.extend(bounds.iter().map(|b| fmt_f64(b.1)));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}
