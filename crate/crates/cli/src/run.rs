//! Executes one resolved scenario and writes its artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use admm_trajopt::admm::{solve_admm, AdmmResult, PerConstraint, WarmStart};
use admm_trajopt::models::car::{car_warm_start, CarDynamics, CarSplit};
use admm_trajopt::models::walker::{run_walking_with, StepHook, StepOutcome, WalkerSplit};
use admm_trajopt::{rollout, DdpProblem, DynamicalSystem, Trajectory};
use log::info;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::output::{Artifacts, StepSummary, Summary, SCHEMA_VERSION};

/// Primal residual norms of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPoint {
    pub step: usize,
    pub iteration: usize,
    pub primal: PerConstraint<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: Summary,
    pub residuals: Vec<ResidualPoint>,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.summary.converged
    }
}

/// Adds uniform noise in `[-amplitude, amplitude]` to every control of `traj`
/// and re-simulates it.
fn jitter(
    system: &dyn DynamicalSystem,
    traj: &Trajectory,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> admm_trajopt::Result<Trajectory> {
    let controls: Vec<DVector<f64>> = traj
        .controls()
        .iter()
        .map(|u| u.map(|v| v + rng.gen_range(-amplitude..=amplitude)))
        .collect();
    rollout(system, traj.initial_state(), &controls)
}

/// Collects step results into the artifacts as they are produced.
struct Recorder {
    artifacts: Artifacts,
    rng: ChaCha8Rng,
    jitter: f64,
    step_duration: f64,
    steps: Vec<StepSummary>,
    residuals: Vec<ResidualPoint>,
    /// Write failure that aborted the walk.
    failure: Option<CliError>,
}

impl Recorder {
    fn record(&mut self, index: usize, result: &AdmmResult) -> Result<(), CliError> {
        let t0 = (index - 1) as f64 * self.step_duration;
        self.artifacts.write_step(index, t0, result)?;
        self.steps.push(StepSummary::of(index, result));
        self.residuals
            .extend(result.trace.records.iter().map(|r| ResidualPoint {
                step: index,
                iteration: r.iteration,
                primal: r.primal_residual,
            }));
        Ok(())
    }
}

impl StepHook for Recorder {
    fn warm_start(&mut self, _index: usize, split: &WalkerSplit, init: &mut WarmStart) -> admm_trajopt::Result<()> {
        if self.jitter > 0.0 {
            init.wholebody = jitter(split.wholebody.system(), &init.wholebody, self.jitter, &mut self.rng)?;
        }
        Ok(())
    }

    fn solved(&mut self, step: &StepOutcome) -> admm_trajopt::Result<()> {
        self.record(step.index, &step.result).map_err(|e| {
            let message = e.to_string();
            self.failure = Some(e);
            admm_trajopt::Error::InvalidInput(message)
        })
    }
}

fn solve(config: &ScenarioConfig, rec: &mut Recorder) -> Result<(), CliError> {
    if let Some(params) = &config.car {
        let split = CarSplit::new(params);
        let mut wholebody = car_warm_start(params)?;
        if rec.jitter > 0.0 {
            let dynamics = CarDynamics {
                wheelbase: params.wheelbase,
                dt: params.dt,
            };
            wholebody = jitter(&dynamics, &wholebody, rec.jitter, &mut rec.rng)?;
        }
        let init = WarmStart {
            wholebody,
            centroidal: None,
        };
        let result = solve_admm(&split, init, &config.admm)?;
        return rec.record(1, &result);
    }
    let scenario = config.walker.as_ref().expect("a resolved config has a model section");
    match run_walking_with(scenario, &config.admm, rec) {
        Ok(_) => Ok(()),
        Err(e) => Err(rec.failure.take().unwrap_or(CliError::Solver(e))),
    }
}

/// Solves `config`, writing tables and `summary.toml` into `dir`. The
/// summary is written even when the solve fails part-way.
pub fn run(config: &ScenarioConfig, dir: &Path) -> Result<RunReport, CliError> {
    let step_duration = match (&config.car, &config.walker) {
        (_, Some(w)) => (w.horizon - 1) as f64 * w.dt,
        _ => 0.0,
    };
    let mut rec = Recorder {
        artifacts: Artifacts::create(dir, config)?,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        jitter: config.jitter,
        step_duration,
        steps: Vec::new(),
        residuals: Vec::new(),
        failure: None,
    };
    let start = Instant::now();
    let outcome = solve(config, &mut rec);
    let expected_steps = config.walker.as_ref().map_or(1, |w| w.plan().steps());
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        scenario: config.scenario.name().to_string(),
        variant: config.variant().name().to_string(),
        converged: outcome.is_ok()
            && rec.steps.len() == expected_steps
            && rec
                .steps
                .iter()
                .all(|s| s.decision == admm_trajopt::admm::StopDecision::Converged),
        iterations: rec.steps.iter().map(|s| s.iterations).sum(),
        final_cost: rec.steps.iter().fold(0.0, |acc, s| acc + s.final_cost),
        wall_time: start.elapsed().as_secs_f64(),
        seed: config.seed,
        error: outcome.as_ref().err().map(ToString::to_string),
        steps: rec.steps,
        config: config.clone(),
    };
    summary.write(dir)?;
    outcome?;
    info!(
        "{} {}: converged={} after {} iterations",
        summary.scenario, summary.variant, summary.converged, summary.iterations
    );
    Ok(RunReport {
        dir: dir.to_path_buf(),
        summary,
        residuals: rec.residuals,
    })
}
