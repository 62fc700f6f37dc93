//! Kinematic car parking under steering and acceleration limits, split into
//! one DDP block and a control-box projection block.

use std::f64::consts::PI;

use nalgebra::{dvector, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admm::{
    solve_admm, AdmmResult, AdmmSettings, ConstraintId, CouplingMap, IdentityMap, PerConstraint, SplitModel,
    StoppingCriteria, Support, WarmStart,
};
use crate::ddp::{DdpProblem, DdpSettings, StageDerivatives, TerminalDerivatives};
use crate::error::{Error, Result};
use crate::projection::AdmissibleSets;
use crate::trajectory::{rollout, DynamicalSystem, Trajectory};

/// Smooth absolute value `√(z² + p²) − p`.
pub fn sabs(z: f64, p: f64) -> f64 {
    (z * z + p * p).sqrt() - p
}

fn sabs_d1(z: f64, p: f64) -> f64 {
    z / (z * z + p * p).sqrt()
}

fn sabs_d2(z: f64, p: f64) -> f64 {
    let r2 = z * z + p * p;
    p * p / (r2 * r2.sqrt())
}

/// Cost coefficients; `l = w_ω ω² + w_a a² + w_p (sabs(x) + sabs(y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarCostWeights {
    pub steer: f64,
    pub accel: f64,
    pub position: f64,
    pub position_smoothing: f64,
    pub terminal_position: f64,
    pub terminal_heading: f64,
    pub terminal_velocity: f64,
    pub terminal_position_smoothing: f64,
    pub terminal_heading_smoothing: f64,
    pub terminal_velocity_smoothing: f64,
}

impl Default for CarCostWeights {
    fn default() -> Self {
        Self {
            steer: 1e-2,
            accel: 1e-4,
            position: 1e-3,
            position_smoothing: 0.1,
            terminal_position: 0.1,
            terminal_heading: 1.0,
            terminal_velocity: 1.0,
            terminal_position_smoothing: 0.1,
            terminal_heading_smoothing: 0.01,
            terminal_velocity_smoothing: 1.0,
        }
    }
}

impl CarCostWeights {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            steer: self.steer * factor,
            accel: self.accel * factor,
            position: self.position * factor,
            terminal_position: self.terminal_position * factor,
            terminal_heading: self.terminal_heading * factor,
            terminal_velocity: self.terminal_velocity * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarParams {
    pub wheelbase: f64,
    pub dt: f64,
    /// Number of states `T`.
    pub horizon: usize,
    /// `(x, y, θ, v)`.
    pub initial_state: [f64; 4],
    pub goal: [f64; 4],
    pub steer_limit: f64,
    pub accel_limit: f64,
    pub costs: CarCostWeights,
}

impl Default for CarParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.0,
            dt: 0.03,
            horizon: 500,
            initial_state: [1.0, 1.0, 3.0 * PI / 2.0, 0.0],
            goal: [0.0; 4],
            steer_limit: 0.5,
            accel_limit: 2.0,
            costs: CarCostWeights::default(),
        }
    }
}

impl CarParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wheelbase", self.wheelbase),
            ("dt", self.dt),
            ("steer_limit", self.steer_limit),
            ("accel_limit", self.accel_limit),
            ("position_smoothing", self.costs.position_smoothing),
            ("terminal_position_smoothing", self.costs.terminal_position_smoothing),
            ("terminal_heading_smoothing", self.costs.terminal_heading_smoothing),
            ("terminal_velocity_smoothing", self.costs.terminal_velocity_smoothing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("car {name} must be positive, got {v}")));
            }
        }
        if self.horizon < 2 {
            return Err(Error::InvalidInput("car horizon must be at least 2".into()));
        }
        Ok(())
    }
}

/// The discrete kinematic car: front-wheel rolling distance `f = h v`,
/// body advance `b`, heading change `asin(sin ω · f / d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarDynamics {
    pub wheelbase: f64,
    pub dt: f64,
}

impl CarDynamics {
    /// `(b, dθ)` and their partials with respect to `(f, ω)`.
    fn geometry(&self, v: f64, w: f64) -> [f64; 6] {
        let d = self.wheelbase;
        let f = self.dt * v;
        let (s, c) = w.sin_cos();
        let root = (d * d - f * f * s * s).sqrt();
        let b = d + f * c - root;
        let ratio = s * f / d;
        let dtheta = ratio.asin();
        let den = (1.0 - ratio * ratio).sqrt();
        let b_f = c + f * s * s / root;
        let b_w = -f * s + f * f * s * c / root;
        let th_f = s / d / den;
        let th_w = c * f / d / den;
        [b, dtheta, b_f, b_w, th_f, th_w]
    }
}

impl DynamicalSystem for CarDynamics {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let [b, dtheta, ..] = self.geometry(x[3], u[0]);
        let (st, ct) = x[2].sin_cos();
        dvector![x[0] + b * ct, x[1] + b * st, x[2] + dtheta, x[3] + self.dt * u[1]]
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let h = self.dt;
        let [b, _, b_f, b_w, th_f, th_w] = self.geometry(x[3], u[0]);
        let (st, ct) = x[2].sin_cos();
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = -b * st;
        a[(1, 2)] = b * ct;
        a[(0, 3)] = ct * b_f * h;
        a[(1, 3)] = st * b_f * h;
        a[(2, 3)] = th_f * h;
        let mut bm = DMatrix::zeros(4, 2);
        bm[(0, 0)] = ct * b_w;
        bm[(1, 0)] = st * b_w;
        bm[(2, 0)] = th_w;
        bm[(3, 1)] = h;
        Ok((a, bm))
    }
}

/// Parking objective around `goal`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarProblem {
    pub dynamics: CarDynamics,
    pub goal: DVector<f64>,
    pub weights: CarCostWeights,
}

impl CarProblem {
    pub fn new(params: &CarParams) -> Self {
        Self {
            dynamics: CarDynamics {
                wheelbase: params.wheelbase,
                dt: params.dt,
            },
            goal: DVector::from_column_slice(&params.goal),
            weights: params.costs.clone(),
        }
    }

    /// `(weight, smoothing)` of the terminal term on each coordinate.
    fn terminal_terms(&self) -> [(f64, f64); 4] {
        let w = &self.weights;
        [
            (w.terminal_position, w.terminal_position_smoothing),
            (w.terminal_position, w.terminal_position_smoothing),
            (w.terminal_heading, w.terminal_heading_smoothing),
            (w.terminal_velocity, w.terminal_velocity_smoothing),
        ]
    }
}

impl DdpProblem for CarProblem {
    fn system(&self) -> &dyn DynamicalSystem {
        &self.dynamics
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> f64 {
        let w = &self.weights;
        let p = w.position_smoothing;
        w.steer * u[0] * u[0]
            + w.accel * u[1] * u[1]
            + w.position * (sabs(x[0] - self.goal[0], p) + sabs(x[1] - self.goal[1], p))
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        self.terminal_terms()
            .iter()
            .enumerate()
            .map(|(i, (w, p))| w * sabs(x[i] - self.goal[i], *p))
            .sum()
    }

    fn stage_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> StageDerivatives {
        let w = &self.weights;
        let p = w.position_smoothing;
        let mut d = StageDerivatives::zeros(4, 2);
        for i in 0..2 {
            let z = x[i] - self.goal[i];
            d.lx[i] = w.position * sabs_d1(z, p);
            d.lxx[(i, i)] = w.position * sabs_d2(z, p);
        }
        d.lu[0] = 2.0 * w.steer * u[0];
        d.lu[1] = 2.0 * w.accel * u[1];
        d.luu[(0, 0)] = 2.0 * w.steer;
        d.luu[(1, 1)] = 2.0 * w.accel;
        d
    }

    fn terminal_derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        let mut d = TerminalDerivatives::zeros(4);
        for (i, (w, p)) in self.terminal_terms().into_iter().enumerate() {
            let z = x[i] - self.goal[i];
            d.lx[i] = w * sabs_d1(z, p);
            d.lxx[(i, i)] = w * sabs_d2(z, p);
        }
        d
    }
}

/// Two-block split: the car DDP block and the control-box projection.
pub struct CarSplit {
    pub problem: CarProblem,
    controls: IdentityMap,
    sets: AdmissibleSets,
}

impl CarSplit {
    pub fn new(params: &CarParams) -> Self {
        let mut sets = AdmissibleSets::unbounded(4, 2);
        sets.control_lower = dvector![-params.steer_limit, -params.accel_limit];
        sets.control_upper = dvector![params.steer_limit, params.accel_limit];
        Self {
            problem: CarProblem::new(params),
            controls: IdentityMap {
                support: Support::StateControl,
                dim: 2,
            },
            sets,
        }
    }
}

impl SplitModel for CarSplit {
    fn wholebody(&self) -> &dyn DdpProblem {
        &self.problem
    }
    fn wholebody_map(&self, id: ConstraintId) -> Option<&dyn CouplingMap> {
        (id == ConstraintId::ControlBox).then_some(&self.controls as &dyn CouplingMap)
    }
    fn sets(&self) -> &AdmissibleSets {
        &self.sets
    }
}

/// ADMM settings for the parking benchmark.
///
/// The whole-body block is solved inexactly (a capped DDP budget per ADMM
/// iteration); exact sub-solves make the variant comparison erratic.
pub fn default_car_settings() -> AdmmSettings {
    AdmmSettings {
        rho: PerConstraint::from_fn(|_| 0.01),
        stopping: StoppingCriteria {
            eps_pri: PerConstraint {
                t: 1e-2,
                ..StoppingCriteria::default().eps_pri
            },
            eps_cost: 1e-3,
            max_iterations: 100,
        },
        wholebody_ddp: DdpSettings {
            max_iterations: 10,
            cost_reduction_tol: 1e-9,
            ..DdpSettings::default()
        },
        ..AdmmSettings::default()
    }
}

/// Zero-control warm start from the initial state.
pub fn car_warm_start(params: &CarParams) -> Result<Trajectory> {
    let dynamics = CarDynamics {
        wheelbase: params.wheelbase,
        dt: params.dt,
    };
    rollout(
        &dynamics,
        &DVector::from_column_slice(&params.initial_state),
        &vec![DVector::zeros(2); params.horizon - 1],
    )
}

/// Solves the parking problem.
pub fn solve_car(params: &CarParams, settings: &AdmmSettings) -> Result<AdmmResult> {
    params.validate()?;
    let split = CarSplit::new(params);
    let init = WarmStart {
        wholebody: car_warm_start(params)?,
        centroidal: None,
    };
    solve_admm(&split, init, settings)
}

/// Final state of the rollout driven by the projected (feasible) controls.
pub fn feasible_final_state(params: &CarParams, result: &AdmmResult) -> Result<DVector<f64>> {
    let dynamics = CarDynamics {
        wheelbase: params.wheelbase,
        dt: params.dt,
    };
    let traj = rollout(
        &dynamics,
        &DVector::from_column_slice(&params.initial_state),
        &result.copies.controls,
    )?;
    Ok(traj.final_state().clone())
}
