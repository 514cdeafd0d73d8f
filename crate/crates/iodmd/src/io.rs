//! Trajectory CSV, model JSON and stabilization report JSON.
//!
//! Trajectories are written with 17 significant digits and models through
//! shortest round-trip formatting, so both reload bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use iodmd_core::identify::TimeDomain;
use iodmd_core::{IterateRecord, Matrix, StabilizeReport, StateSpaceModel, TrajectoryData};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn flush(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Full-precision scientific notation (17 significant digits).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn trajectory_header(n: usize, m: usize, q: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m).map(|i| format!("u{i}")));
    h.extend((1..=q).map(|i| format!("y{i}")));
    h
}

/// Writes `t,x1..xN,u1..uM,y1..yQ` with one row per sample.
pub fn write_trajectory_csv<W: Write>(writer: W, traj: &TrajectoryData) -> Result<()> {
    let (n, m, q) = (traj.state_dim(), traj.input_dim(), traj.output_dim());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(trajectory_header(n, m, q))?;
    let mut row = Vec::with_capacity(1 + n + m + q);
    for k in 0..traj.samples() {
        row.clear();
        row.push(format_f64(traj.time(k)));
        row.extend(traj.states().column(k).iter().map(|v| format_f64(*v)));
        row.extend(traj.inputs().column(k).iter().map(|v| format_f64(*v)));
        row.extend(traj.outputs().column(k).iter().map(|v| format_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<trajectory stream>", e))?;
    Ok(())
}

/// Reads a trajectory CSV. The step width is `t₁ − t₀`; the time column must
/// be uniform to within `1e-9` relative.
pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<TrajectoryData> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(Error::format("trajectory CSV", "first column must be `t`"));
    }
    let count = |prefix: char| header.iter().filter(|h| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok()).count();
    let (n, m, q) = (count('x'), count('u'), count('y'));
    if header != trajectory_header(n, m, q) {
        return Err(Error::format("trajectory CSV", format!("unexpected header {}", header.join(","))));
    }
    let mut times = Vec::new();
    let mut columns: Vec<f64> = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::format("trajectory CSV", format!("row {} has {} fields, expected {}", line + 2, record.len(), header.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::format("trajectory CSV", format!("row {}: `{field}` is not a number", line + 2)))?;
            if j == 0 {
                times.push(v);
            } else {
                columns.push(v);
            }
        }
    }
    let samples = times.len();
    if samples < 2 {
        return Err(Error::format("trajectory CSV", "at least two samples are required"));
    }
    let step = times[1] - times[0];
    if !(step > 0.0) {
        return Err(Error::format("trajectory CSV", "time column must increase"));
    }
    for (k, t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * step;
        if (t - expected).abs() > 1e-9 * expected.abs().max(step) {
            return Err(Error::format("trajectory CSV", format!("non-uniform time at sample {k}")));
        }
    }
    let width = n + m + q;
    let block = |offset: usize, rows: usize| Matrix::from_fn(rows, samples, |i, k| columns[k * width + offset + i]);
    Ok(TrajectoryData::new(block(0, n), block(n, m), block(n + m, q), step)?)
}

pub fn save_trajectory(path: &Path, traj: &TrajectoryData) -> Result<()> {
    let mut w = create(path)?;
    write_trajectory_csv(&mut w, traj)?;
    flush(w, path)
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryData> {
    read_trajectory_csv(open(path)?)
}

/// On-disk model representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub order: usize,
    pub m: usize,
    pub p: usize,
    /// `"discrete"` or `"continuous"`.
    pub time_domain: String,
    pub step_width: Option<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::format("model JSON", format!("{name} must be {nrows}×{ncols}")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ModelJson {
    pub fn from_model(model: &StateSpaceModel) -> Result<Self> {
        let g = model.block_matrix();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("model JSON", "matrices must be finite"));
        }
        let (time_domain, step_width) = match model.time_domain() {
            TimeDomain::Discrete { step_width } => ("discrete", Some(step_width)),
            TimeDomain::Continuous => ("continuous", None),
        };
        Ok(Self {
            order: model.order(),
            m: model.inputs(),
            p: model.outputs(),
            time_domain: time_domain.into(),
            step_width,
            a: rows_of(model.a()),
            b: rows_of(model.b()),
            c: rows_of(model.c()),
            d: rows_of(model.d()),
        })
    }

    pub fn to_model(&self) -> Result<StateSpaceModel> {
        let (r, m, p) = (self.order, self.m, self.p);
        let td = match (self.time_domain.as_str(), self.step_width) {
            ("discrete", Some(h)) => TimeDomain::Discrete { step_width: h },
            ("discrete", None) => return Err(Error::format("model JSON", "discrete models need a step_width")),
            ("continuous", _) => TimeDomain::Continuous,
            (other, _) => return Err(Error::format("model JSON", format!("unknown time_domain `{other}`"))),
        };
        Ok(StateSpaceModel::new(
            matrix_of("A", &self.a, r, r)?,
            matrix_of("B", &self.b, r, m)?,
            matrix_of("C", &self.c, p, r)?,
            matrix_of("D", &self.d, p, m)?,
            td,
        )?)
    }
}

pub fn write_model_json<W: Write>(writer: W, model: &StateSpaceModel) -> Result<()> {
    serde_json::to_writer_pretty(writer, &ModelJson::from_model(model)?)?;
    Ok(())
}

pub fn read_model_json<R: Read>(reader: R) -> Result<StateSpaceModel> {
    let json: ModelJson = serde_json::from_reader(reader)?;
    json.to_model()
}

pub fn save_model(path: &Path, model: &StateSpaceModel) -> Result<()> {
    let mut w = create(path)?;
    write_model_json(&mut w, model)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    flush(w, path)
}

pub fn load_model(path: &Path) -> Result<StateSpaceModel> {
    read_model_json(open(path)?)
}

/// Non-finite values are written as `null`.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateJson {
    pub iteration: usize,
    pub penalty: Option<f64>,
    pub merit: Option<f64>,
    pub objective: Option<f64>,
    pub spectral_radius: Option<f64>,
}

impl From<&IterateRecord> for IterateJson {
    fn from(r: &IterateRecord) -> Self {
        Self {
            iteration: r.iteration,
            penalty: finite(r.penalty),
            merit: finite(r.merit),
            objective: finite(r.objective),
            spectral_radius: finite(r.spectral_radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    /// `"stabilized"`, `"already_stable"` or `"not_stabilized"`.
    pub status: String,
    pub reason: Option<String>,
    pub iterations_total: usize,
    pub iterations_to_first_stable: Option<usize>,
    pub function_evaluations: usize,
    pub initial_objective: Option<f64>,
    pub final_objective: Option<f64>,
    pub final_objective_ratio: Option<f64>,
    pub initial_spectral_radius: Option<f64>,
    pub final_spectral_radius: Option<f64>,
    pub relative_model_change: Option<f64>,
    pub final_penalty: Option<f64>,
    pub converged: bool,
    pub nonsmooth_encountered: bool,
    pub trace: Vec<IterateJson>,
}

impl ReportJson {
    pub fn new(report: &StabilizeReport, failure: Option<&str>) -> Self {
        let status = match failure {
            Some(_) => "not_stabilized",
            None if report.iterations_total == 0 && report.iterations_to_first_stable == Some(0) => "already_stable",
            None => "stabilized",
        };
        Self {
            status: status.into(),
            reason: failure.map(str::to_string),
            iterations_total: report.iterations_total,
            iterations_to_first_stable: report.iterations_to_first_stable,
            function_evaluations: report.function_evaluations,
            initial_objective: finite(report.initial_objective),
            final_objective: finite(report.final_objective),
            final_objective_ratio: finite(report.final_objective_ratio),
            initial_spectral_radius: finite(report.initial_spectral_radius),
            final_spectral_radius: finite(report.final_spectral_radius),
            relative_model_change: finite(report.relative_model_change),
            final_penalty: finite(report.final_penalty),
            converged: report.converged,
            nonsmooth_encountered: report.nonsmooth_encountered,
            trace: report.trace.iter().map(IterateJson::from).collect(),
        }
    }
}

pub fn save_report(path: &Path, report: &StabilizeReport, failure: Option<&str>) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &ReportJson::new(report, failure))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    flush(w, path)
}
