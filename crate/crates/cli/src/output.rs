//! Result tables and the run summary.
//!
//! Tables are comma-separated with one header row. Column names and order
//! are part of [`SCHEMA_VERSION`]; every emitted number is finite.

use std::fs::File;
use std::path::{Path, PathBuf};

use admm_trajopt::admm::{AdmmResult, ConstraintId, StopDecision};
use admm_trajopt::models::walker::dynamics::split_state;
use admm_trajopt::models::walker::WalkerModel;
use nalgebra::{DVector, Vector3};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

const CAR_STATES: [&str; 4] = ["x", "y", "theta", "v"];
const CAR_CONTROLS: [&str; 2] = ["steer", "accel"];
const WALKER_CONFIG: [&str; 6] = [
    "hip_x",
    "hip_z",
    "stance_thigh",
    "hip_angle",
    "stance_knee",
    "swing_knee",
];
const WALKER_CONTROLS: [&str; 3] = ["tau_hip", "tau_stance_knee", "tau_swing_knee"];
const CENTROIDAL_STATES: [&str; 6] = ["c_x", "c_z", "theta", "dc_x", "dc_z", "dtheta"];

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`;
/// both zeros print as `0`.
pub fn number(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// One table row; remembers the first non-finite cell.
#[derive(Default)]
struct Row {
    cells: Vec<String>,
    bad: Option<usize>,
}

impl Row {
    fn num(&mut self, v: f64) {
        if !v.is_finite() && self.bad.is_none() {
            self.bad = Some(self.cells.len());
        }
        self.cells.push(number(v));
    }

    fn nums<'v>(&mut self, vs: impl IntoIterator<Item = &'v f64>) {
        for &v in vs {
            self.num(v);
        }
    }

    fn int(&mut self, v: usize) {
        self.cells.push(v.to_string());
    }

    fn text(&mut self, v: &str) {
        self.cells.push(v.to_string());
    }

    fn blank(&mut self, n: usize) {
        self.cells.extend(std::iter::repeat_n(String::new(), n));
    }
}

struct Table {
    name: &'static str,
    path: PathBuf,
    header: Vec<String>,
    writer: csv::Writer<File>,
}

impl Table {
    fn create(dir: &Path, name: &'static str, header: Vec<String>) -> Result<Self, CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let mut table = Self {
            name,
            path,
            header,
            writer: csv::Writer::from_writer(file),
        };
        let header = table.header.clone();
        table.write_raw(&header)?;
        Ok(table)
    }

    fn write_raw(&mut self, cells: &[String]) -> Result<(), CliError> {
        self.writer.write_record(cells).map_err(|source| CliError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    fn write(&mut self, row: Row) -> Result<(), CliError> {
        debug_assert_eq!(row.cells.len(), self.header.len(), "{}", self.name);
        if let Some(i) = row.bad {
            return Err(CliError::NonFinite {
                table: self.name,
                column: self.header[i].clone(),
            });
        }
        self.write_raw(&row.cells)
    }

    fn flush(&mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|source| CliError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

fn prefixed(prefix: &str, names: &[&str]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}{n}")).collect()
}

enum Layout {
    Car,
    Walker { model: Box<WalkerModel> },
}

impl Layout {
    fn states(&self) -> Vec<String> {
        match self {
            Layout::Car => prefixed("", &CAR_STATES),
            Layout::Walker { .. } => [prefixed("", &WALKER_CONFIG), prefixed("d_", &WALKER_CONFIG)].concat(),
        }
    }

    fn controls(&self) -> Vec<String> {
        match self {
            Layout::Car => prefixed("", &CAR_CONTROLS),
            Layout::Walker { .. } => prefixed("", &WALKER_CONTROLS),
        }
    }

    fn trajectory_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["step", "k", "time"].map(String::from).to_vec();
        h.extend(self.states());
        h.extend(self.controls());
        if let Layout::Walker { .. } = self {
            h.extend(self.states().iter().map(|s| format!("sbar_{s}")));
        }
        h.extend(self.controls().iter().map(|s| format!("ubar_{s}")));
        if let Layout::Walker { .. } = self {
            h.extend(["com_x", "com_z", "force_x", "force_z", "lambda_bar_x", "lambda_bar_z"].map(String::from));
            h.extend(prefixed("cen_", &CENTROIDAL_STATES));
            h.extend(["cen_lambda_x", "cen_lambda_z"].map(String::from));
        }
        h
    }
}

fn residual_header() -> Vec<String> {
    let mut h: Vec<String> = vec!["step".into(), "iteration".into()];
    h.extend(ConstraintId::ALL.iter().map(|id| format!("r_{}", id.symbol())));
    h.extend(
        ConstraintId::ALL
            .iter()
            .filter(|id| id.is_projection())
            .map(|id| format!("d_{}", id.symbol())),
    );
    h.extend(ConstraintId::ALL.iter().map(|id| format!("rho_{}", id.symbol())));
    h.extend(
        [
            "wholebody_cost",
            "centroidal_cost",
            "wholebody_penalty",
            "centroidal_penalty",
            "wholebody_ddp_iterations",
            "centroidal_ddp_iterations",
            "decision",
        ]
        .map(String::from),
    );
    h
}

fn snapshot_header() -> Vec<String> {
    [
        "step",
        "iteration",
        "k",
        "wholebody_com_x",
        "wholebody_com_z",
        "centroidal_com_x",
        "centroidal_com_z",
    ]
    .map(String::from)
    .to_vec()
}

pub fn decision_name(d: StopDecision) -> &'static str {
    match d {
        StopDecision::Continue => "continue",
        StopDecision::Converged => "converged",
        StopDecision::MaxIterations => "max_iterations",
    }
}

/// Streaming writer for one run's tables; rows are flushed after every step
/// so a failed run keeps the steps it finished.
pub struct Artifacts {
    layout: Layout,
    dt: f64,
    trajectory: Table,
    residuals: Table,
    snapshots: Option<Table>,
}

impl Artifacts {
    pub fn create(dir: &Path, config: &ScenarioConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let (layout, dt) = match (&config.car, &config.walker) {
            (Some(car), _) => (Layout::Car, car.dt),
            (None, Some(walker)) => (
                Layout::Walker {
                    model: Box::new(WalkerModel::new(walker.params.clone())?),
                },
                walker.dt,
            ),
            (None, None) => unreachable!("a resolved config has a model section"),
        };
        let snapshots = match layout {
            Layout::Walker { .. } => Some(Table::create(dir, SNAPSHOTS_FILE, snapshot_header())?),
            Layout::Car => None,
        };
        Ok(Self {
            trajectory: Table::create(dir, TRAJECTORY_FILE, layout.trajectory_header())?,
            residuals: Table::create(dir, RESIDUALS_FILE, residual_header())?,
            snapshots,
            layout,
            dt,
        })
    }

    /// Appends walking step `step` (1-based), which starts at `t0`.
    pub fn write_step(&mut self, step: usize, t0: f64, result: &AdmmResult) -> Result<(), CliError> {
        self.write_trajectory(step, t0, result)?;
        self.write_residuals(step, result)?;
        if let Some(table) = &mut self.snapshots {
            for snap in &result.trace.snapshots {
                for (k, (w, c)) in snap.wholebody.iter().zip(&snap.centroidal).enumerate() {
                    let mut row = Row::default();
                    row.int(step);
                    row.int(snap.iteration);
                    row.int(k);
                    row.nums(w.iter().chain(c.iter()));
                    table.write(row)?;
                }
            }
            table.flush()?;
        }
        self.trajectory.flush()?;
        self.residuals.flush()
    }

    fn write_trajectory(&mut self, step: usize, t0: f64, result: &AdmmResult) -> Result<(), CliError> {
        let states = result.wholebody.states();
        let controls = result.wholebody.controls();
        let nu = self.layout.controls().len();
        let copies = &result.copies;
        let cen = result.centroidal.as_ref();
        for (k, x) in states.iter().enumerate() {
            let mut row = Row::default();
            row.int(step);
            row.int(k);
            row.num(t0 + k as f64 * self.dt);
            row.nums(x.iter());
            let u: Option<&DVector<f64>> = controls.get(k);
            match u {
                Some(u) => row.nums(u.iter()),
                None => row.blank(nu),
            }
            if let Layout::Walker { .. } = self.layout {
                row.nums(copies.states[k].iter());
            }
            match copies.controls.get(k) {
                Some(ubar) => row.nums(ubar.iter()),
                None => row.blank(nu),
            }
            if let Layout::Walker { model } = &self.layout {
                let (q, v) = split_state(x);
                row.nums(model.com_position(&q).iter());
                match u {
                    Some(u) => {
                        let force = model.contact_solve(&q, &v, &Vector3::new(u[0], u[1], u[2]))?.force;
                        row.nums(force.iter());
                    }
                    None => row.blank(2),
                }
                match copies.forces.get(k) {
                    Some(f) => row.nums(f.iter()),
                    None => row.blank(2),
                }
                let cen = cen.expect("walker runs have a centroidal trajectory");
                row.nums(cen.states()[k].iter());
                match cen.controls().get(k) {
                    Some(l) => row.nums(l.iter()),
                    None => row.blank(2),
                }
            }
            self.trajectory.write(row)?;
        }
        Ok(())
    }

    fn write_residuals(&mut self, step: usize, result: &AdmmResult) -> Result<(), CliError> {
        for rec in &result.trace.records {
            let mut row = Row::default();
            row.int(step);
            row.int(rec.iteration);
            row.nums(ConstraintId::ALL.iter().map(|&id| &rec.primal_residual[id]));
            row.nums(
                ConstraintId::ALL
                    .iter()
                    .filter(|id| id.is_projection())
                    .map(|&id| &rec.dual_residual[id]),
            );
            row.nums(ConstraintId::ALL.iter().map(|&id| &rec.rho[id]));
            row.nums([
                &rec.wholebody_cost,
                &rec.centroidal_cost,
                &rec.wholebody_penalty,
                &rec.centroidal_penalty,
            ]);
            row.int(rec.wholebody_ddp_iterations);
            row.int(rec.centroidal_ddp_iterations);
            row.text(decision_name(rec.decision));
            self.residuals.write(row)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepSummary {
    pub index: usize,
    pub decision: StopDecision,
    pub iterations: usize,
    /// Whole-body local cost at the last iteration.
    pub final_cost: f64,
    pub wall_time: f64,
}

impl StepSummary {
    pub fn of(index: usize, result: &AdmmResult) -> Self {
        let records = &result.trace.records;
        Self {
            index,
            decision: result.decision,
            iterations: records.len(),
            final_cost: records
                .last()
                .map_or(result.trace.initial_wholebody_cost, |r| r.wholebody_cost),
            wall_time: records.iter().map(|r| r.wall_time).sum(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub variant: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    pub wall_time: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: Vec<StepSummary>,
    /// The resolved config; loading it reproduces the run.
    pub config: ScenarioConfig,
}

impl Summary {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(SUMMARY_FILE);
        let text = toml::to_string(self).expect("summary serializes to TOML");
        std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }
}
