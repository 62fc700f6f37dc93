//! Walking scenarios: nominal postures, warm starts and the step-by-step
//! receding-horizon loop with stance exchange.

use log::{info, warn};
use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::centroidal::{CentroidalDynamics, CentroidalProblem, CentroidalWeights};
use super::dynamics::{join_state, split_state, WalkerDynamics, CONTROL_DIM};
use super::kinematics::{Config, WalkerModel, WalkerParams};
use super::problem::{WalkerLimits, WalkerSplit, WholeBodyProblem, WholeBodyWeights};
use super::terrain::{swing_reference, FootstepPlan, Terrain};
use crate::admm::{
    solve_admm, AccelerationConfig, AdmmResult, AdmmSettings, PerConstraint, StoppingCriteria, Variant, WarmStart,
};
use crate::ddp::{self, DdpSettings};
use crate::error::{Error, Result};
use crate::trajectory::{rollout, DynamicalSystem, Trajectory};

/// Absolute leg direction and knee flexion reaching from `hip` to `foot`;
/// `None` when out of reach.
pub fn leg_ik(hip: Vector2<f64>, foot: Vector2<f64>, thigh: f64, shank: f64) -> Option<(f64, f64)> {
    let d = foot - hip;
    let dist = d.norm();
    let cos_knee = (dist * dist - thigh * thigh - shank * shank) / (2.0 * thigh * shank);
    if !(-1.0..=1.0).contains(&cos_knee) || dist == 0.0 {
        return None;
    }
    let knee = cos_knee.acos();
    let phi = d.x.atan2(-d.y);
    let beta = (shank * knee.sin() / dist).clamp(-1.0, 1.0).asin();
    Some((phi + beta, knee))
}

/// Like [`leg_ik`] but saturates to a straight leg aimed at the foot.
fn leg_ik_clamped(hip: Vector2<f64>, foot: Vector2<f64>, thigh: f64, shank: f64) -> (f64, f64) {
    leg_ik(hip, foot, thigh, shank).unwrap_or_else(|| {
        let d = foot - hip;
        (d.x.atan2(-d.y), 0.0)
    })
}

/// Posture with the hip at `hip` and both feet at the given points.
pub fn posture(model: &WalkerModel, hip: Vector2<f64>, stance: Vector2<f64>, swing: Vector2<f64>) -> Result<Config> {
    let (lt, ls) = (model.params.thigh_length, model.params.shank_length);
    let unreachable = |which: &str| Error::InvalidInput(format!("{which} foot out of reach from hip {hip:?}"));
    let (st, kst) = leg_ik(hip, stance, lt, ls).ok_or_else(|| unreachable("stance"))?;
    let (sw, ksw) = leg_ik(hip, swing, lt, ls).ok_or_else(|| unreachable("swing"))?;
    Ok(Config::from_row_slice(&[hip.x, hip.y, st, sw - st, kst, ksw]))
}

/// Double-support posture with the hip midway between the feet, as high as
/// allowed by `min_knee` flexion on the more stretched leg.
pub fn double_support_posture(
    model: &WalkerModel,
    stance: Vector2<f64>,
    swing: Vector2<f64>,
    min_knee: f64,
) -> Result<Config> {
    let (lt, ls) = (model.params.thigh_length, model.params.shank_length);
    let reach = (lt * lt + ls * ls + 2.0 * lt * ls * min_knee.cos()).sqrt();
    let hx = 0.5 * (stance.x + swing.x);
    let height = |foot: Vector2<f64>| {
        let dx = hx - foot.x;
        foot.y + (reach * reach - dx * dx).max(0.0).sqrt()
    };
    let hip = Vector2::new(hx, height(stance).min(height(swing)));
    posture(model, hip, stance, swing)
}

/// Scenario parameters for a multi-step walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerScenario {
    pub params: WalkerParams,
    pub wholebody_costs: WholeBodyWeights,
    pub centroidal_costs: CentroidalWeights,
    pub limits: WalkerLimits,
    pub terrain: Terrain,
    pub steps: usize,
    pub step_length: f64,
    /// Explicit foothold x-positions (trailing foot first); overrides
    /// `steps` and `step_length`.
    pub footholds: Option<Vec<f64>>,
    /// States per walking step.
    pub horizon: usize,
    pub dt: f64,
    /// Knee flexion of the nominal double-support posture.
    pub nominal_knee: f64,
    /// Initial rotation rate of the body about the stance foot (negative is forward).
    pub initial_rate: f64,
    /// Swing apex above the higher endpoint; defaults by terrain kind.
    pub clearance: Option<f64>,
    /// Unconstrained whole-body DDP iterations used to build the warm start.
    pub warm_start_iterations: usize,
    pub warm_start_gains: [f64; 2],
    pub abort_on_unconverged: bool,
}

impl Default for WalkerScenario {
    fn default() -> Self {
        Self {
            params: WalkerParams::default(),
            wholebody_costs: WholeBodyWeights::default(),
            centroidal_costs: CentroidalWeights::default(),
            limits: WalkerLimits::default(),
            terrain: Terrain::default(),
            steps: 3,
            step_length: 0.3,
            footholds: None,
            horizon: 50,
            dt: 0.01,
            nominal_knee: 0.2,
            initial_rate: -1.0,
            clearance: None,
            warm_start_iterations: 30,
            warm_start_gains: [200.0, 20.0],
            abort_on_unconverged: false,
        }
    }
}

impl WalkerScenario {
    /// Six steps over a staircase of 4 cm rises.
    pub fn stairs() -> Self {
        Self {
            terrain: Terrain::Stairs {
                rise: 0.04,
                run: 0.3,
                count: 6,
                start: 0.15,
            },
            steps: 6,
            wholebody_costs: WholeBodyWeights {
                terminal_velocity: 100.0,
                ..WholeBodyWeights::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.terrain.validate()?;
        if self.horizon < 2 {
            return Err(Error::InvalidInput("walker horizon must be at least 2".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "walker dt must be positive, got {}",
                self.dt
            )));
        }
        let l = &self.limits;
        if !(l.knee_min <= l.knee_max && l.torque > 0.0 && l.friction > 0.0) {
            return Err(Error::InvalidInput(format!("invalid walker limits {l:?}")));
        }
        self.plan().validate(&self.terrain)
    }

    pub fn plan(&self) -> FootstepPlan {
        match &self.footholds {
            Some(xs) => FootstepPlan::from_positions(&self.terrain, xs),
            None => FootstepPlan::regular(&self.terrain, 0.0, self.step_length, self.steps),
        }
    }

    pub fn clearance(&self) -> f64 {
        self.clearance.unwrap_or(match self.terrain {
            Terrain::Flat { .. } => 0.08,
            Terrain::Stairs { .. } => 0.05,
        })
    }
}

/// ADMM settings with the walker penalties
/// `ρ = (c 1e4, h 1e-2, λ 1e-2, j 10, t 0.1, f 1e-2)`.
///
/// The c, h and λ tolerances sit above the floor left by discretizing the two
/// models differently (about 2e-3 m, 1.5 kg·m/s and 4 N stacked over a step);
/// the projection tolerances are tight so that converged knees and forces lie
/// in their sets. Plain ADMM is used: relaxation blends in stale copies and
/// leaves the tight projection residuals on a floor while the whole-body
/// trajectory keeps moving.
pub fn default_walker_settings() -> AdmmSettings {
    AdmmSettings {
        acceleration: AccelerationConfig {
            variant: Variant::Vanilla,
            ..AccelerationConfig::default()
        },
        rho: PerConstraint {
            c: 1e4,
            h: 1e-2,
            lambda: 1e-2,
            j: 10.0,
            t: 0.1,
            f: 1e-2,
        },
        stopping: StoppingCriteria {
            eps_pri: PerConstraint {
                c: 1e-2,
                h: 2.0,
                lambda: 10.0,
                j: 1e-6,
                t: 0.1,
                f: 1e-8,
            },
            eps_cost: 1e-2,
            max_iterations: 50,
        },
        wholebody_ddp: DdpSettings {
            max_iterations: 10,
            ..DdpSettings::default()
        },
        centroidal_ddp: DdpSettings {
            max_iterations: 10,
            ..DdpSettings::default()
        },
        ..AdmmSettings::default()
    }
}

/// Geometry of one walking step.
#[derive(Debug, Clone)]
pub struct StepSetup {
    pub stance_foot: Vector2<f64>,
    pub swing_start: Vector2<f64>,
    pub swing_target: Vector2<f64>,
    pub initial_state: DVector<f64>,
}

/// Builds the split problem of one step.
pub fn build_step(model: &WalkerModel, scenario: &WalkerScenario, setup: &StepSetup) -> Result<WalkerSplit> {
    let dynamics = WalkerDynamics {
        model: model.clone(),
        stance_foot: setup.stance_foot,
        dt: scenario.dt,
    };
    let end = double_support_posture(model, setup.stance_foot, setup.swing_target, scenario.nominal_knee)?;
    let start = double_support_posture(model, setup.stance_foot, setup.swing_start, scenario.nominal_knee)?;
    let mut rotation = Config::zeros();
    rotation[2] = scenario.initial_rate;
    let (_, terminal_velocity) = model.anchor(&end, &rotation, &setup.stance_foot);
    let wholebody = WholeBodyProblem {
        dynamics,
        weights: scenario.wholebody_costs.clone(),
        swing_reference: swing_reference(
            setup.swing_start,
            setup.swing_target,
            scenario.clearance(),
            scenario.horizon,
        ),
        terminal_posture: end,
        terminal_velocity,
    };
    let centroidal = CentroidalProblem {
        dynamics: CentroidalDynamics {
            mass: model.total_mass(),
            inertia: model.composite_inertia(&start),
            gravity: model.params.gravity,
            contact: setup.stance_foot,
            dt: scenario.dt,
        },
        weights: scenario.centroidal_costs.clone(),
    };
    Ok(WalkerSplit::new(wholebody, centroidal, &scenario.limits))
}

/// Joint-space PD tracking of the stance knee's nominal flexion and of the
/// swing-foot reference (through leg IK), with bias compensation.
fn pd_rollout(split: &WalkerSplit, scenario: &WalkerScenario, x0: &DVector<f64>) -> Result<Trajectory> {
    let dynamics = &split.wholebody.dynamics;
    let model = &dynamics.model;
    let (lt, ls) = (model.params.thigh_length, model.params.shank_length);
    let [kp, kd] = scenario.warm_start_gains;
    let reference = &split.wholebody.swing_reference;
    let mut states = vec![x0.clone()];
    let mut controls = Vec::with_capacity(reference.len() - 1);
    for k in 0..reference.len() - 1 {
        let (q, v) = split_state(&states[k]);
        let hip = Vector2::new(q[0], q[1]);
        let (swing_abs, swing_knee) = leg_ik_clamped(hip, reference[(k + 1).min(reference.len() - 1)], lt, ls);
        let target = [swing_abs - q[2], scenario.nominal_knee, swing_knee];
        let bias = model.bias_forces(&q, &v);
        let u = DVector::from_fn(CONTROL_DIM, |i, _| {
            let j = 3 + i;
            (bias[j] + kp * (target[i] - q[j]) - kd * v[j]).clamp(-scenario.limits.torque, scenario.limits.torque)
        });
        let next = dynamics.step(&states[k], &u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("warm-start rollout diverged at step {k}")));
        }
        states.push(next);
        controls.push(u);
    }
    Trajectory::new(states, controls, scenario.dt)
}

/// Centroidal state matching the whole-body state `x`; `θ` starts at zero.
pub fn centroidal_state(model: &WalkerModel, inertia: f64, x: &DVector<f64>, theta: f64) -> DVector<f64> {
    let (q, v) = split_state(x);
    let c = model.com_position(&q);
    let h = model.centroidal_momentum_matrix(&q) * v;
    let m = model.total_mass();
    DVector::from_column_slice(&[c.x, c.y, theta, h[0] / m, h[1] / m, h[2] / inertia])
}

/// Warm start: a PD rollout refined by unconstrained whole-body DDP, and the
/// centroidal trajectory driven by the resulting contact forces.
pub fn warm_start(split: &WalkerSplit, scenario: &WalkerScenario, x0: &DVector<f64>) -> Result<WarmStart> {
    let pd = pd_rollout(split, scenario, x0)?;
    let wholebody = if scenario.warm_start_iterations > 0 {
        let settings = DdpSettings {
            max_iterations: scenario.warm_start_iterations,
            ..DdpSettings::default()
        };
        ddp::solve(&split.wholebody, &pd, &settings)
            .map_err(|e| Error::SubSolver {
                block: "warm-start",
                message: e.to_string(),
            })?
            .trajectory
    } else {
        pd
    };
    let cen = split.centroidal_dynamics();
    let model = &split.wholebody.dynamics.model;
    let forces: Vec<DVector<f64>> = wholebody
        .controls()
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let (q, v) = split_state(&wholebody.states()[k]);
            let sol = model.contact_solve(&q, &v, &Vector3::new(u[0], u[1], u[2]))?;
            Ok(DVector::from_column_slice(sol.force.as_slice()))
        })
        .collect::<Result<_>>()?;
    let centroidal = rollout(cen, &centroidal_state(model, cen.inertia, x0, 0.0), &forces)?;
    Ok(WarmStart {
        wholebody,
        centroidal: Some(centroidal),
    })
}

/// One solved walking step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub index: usize,
    pub stance_foot: Vector2<f64>,
    pub swing_reference: Vec<Vector2<f64>>,
    pub result: AdmmResult,
}

impl StepOutcome {
    pub fn converged(&self) -> bool {
        self.result.converged()
    }
}

#[derive(Debug, Clone)]
pub struct WalkingRun {
    pub steps: Vec<StepOutcome>,
    /// Whether the loop stopped early on an unconverged step.
    pub aborted: bool,
}

impl WalkingRun {
    pub fn all_converged(&self) -> bool {
        !self.aborted && self.steps.iter().all(StepOutcome::converged)
    }
}

/// Initial state of the first step: nominal double-support posture rotating
/// rigidly about the stance foot at `initial_rate`.
pub fn initial_state(model: &WalkerModel, scenario: &WalkerScenario) -> Result<DVector<f64>> {
    let plan = scenario.plan();
    let q = double_support_posture(model, plan.footholds[1], plan.footholds[0], scenario.nominal_knee)?;
    let mut v = Config::zeros();
    v[2] = scenario.initial_rate;
    let (q, v) = model.anchor(&q, &v, &plan.footholds[1]);
    Ok(join_state(&q, &v))
}

/// Stance exchange at the end of a step: relabel, drop the new stance foot
/// onto the terrain and remove its velocity. The trailing leg is re-solved so
/// that its foot stays at `trailing`, the stance point it is leaving.
pub fn next_initial_state(
    model: &WalkerModel,
    terrain: &Terrain,
    x: &DVector<f64>,
    trailing: Vector2<f64>,
) -> Result<(DVector<f64>, Vector2<f64>)> {
    let (q, v) = split_state(x);
    let (q, v) = model.swap_stance(&q, &v)?;
    let landing = model.stance_foot.position(&q);
    let foot = Vector2::new(landing.x, terrain.height(landing.x));
    let (mut q, v) = model.anchor(&q, &v, &foot);
    let (lt, ls) = (model.params.thigh_length, model.params.shank_length);
    if let Some((abs, knee)) = leg_ik(Vector2::new(q[0], q[1]), trailing, lt, ls) {
        q[3] = abs - q[2];
        q[5] = knee;
    }
    Ok((join_state(&q, &v), foot))
}

/// Callbacks around each step of [`run_walking_with`].
pub trait StepHook {
    /// May modify the warm start of step `index` before it is solved.
    fn warm_start(&mut self, _index: usize, _split: &WalkerSplit, _init: &mut WarmStart) -> Result<()> {
        Ok(())
    }
    /// Called once per solved step, before the next one is built.
    fn solved(&mut self, _step: &StepOutcome) -> Result<()> {
        Ok(())
    }
}

impl StepHook for () {}

/// Solves the walk one step at a time, each step warm-started from the
/// previous step's final state.
pub fn run_walking(scenario: &WalkerScenario, settings: &AdmmSettings) -> Result<WalkingRun> {
    run_walking_with(scenario, settings, &mut ())
}

/// [`run_walking`] with per-step callbacks.
pub fn run_walking_with(
    scenario: &WalkerScenario,
    settings: &AdmmSettings,
    hook: &mut dyn StepHook,
) -> Result<WalkingRun> {
    scenario.validate()?;
    settings.validate()?;
    let model = WalkerModel::new(scenario.params.clone())?;
    let plan = scenario.plan();
    let mut x0 = initial_state(&model, scenario)?;
    let mut stance = plan.footholds[1];
    let mut swing_start = plan.footholds[0];
    let mut steps = Vec::with_capacity(plan.steps());
    let mut aborted = false;
    for i in 1..=plan.steps() {
        let setup = StepSetup {
            stance_foot: stance,
            swing_start,
            swing_target: plan.footholds[i + 1],
            initial_state: x0.clone(),
        };
        let split = build_step(&model, scenario, &setup)?;
        let mut init = warm_start(&split, scenario, &x0)?;
        hook.warm_start(i, &split, &mut init)?;
        let result = solve_admm(&split, init, settings)?;
        info!(
            "walking step {i}: {:?} after {} iterations",
            result.decision,
            result.trace.records.len()
        );
        let converged = result.converged();
        let (next, foot) = next_initial_state(&model, &scenario.terrain, result.wholebody.final_state(), stance)?;
        let outcome = StepOutcome {
            index: i,
            stance_foot: stance,
            swing_reference: split.wholebody.swing_reference.clone(),
            result,
        };
        hook.solved(&outcome)?;
        steps.push(outcome);
        if !converged && scenario.abort_on_unconverged {
            warn!("walking step {i} did not converge; aborting");
            aborted = true;
            break;
        }
        swing_start = stance;
        stance = foot;
        x0 = next;
    }
    Ok(WalkingRun { steps, aborted })
}

/// Swing-foot height above the terrain at every state of a step.
pub fn swing_clearance(model: &WalkerModel, terrain: &Terrain, traj: &Trajectory) -> Vec<f64> {
    traj.states()
        .iter()
        .map(|x| {
            let (q, _) = split_state(x);
            let p = model.swing_foot.position(&q);
            p.y - terrain.height(p.x)
        })
        .collect()
}
