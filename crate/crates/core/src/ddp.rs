//! Unconstrained iLQR (Gauss-Newton DDP) solver.
//!
//! The solver alternates a backward Riccati-like sweep over local quadratic
//! models with a backtracking forward rollout. Regularization is added to the
//! control Hessian `Q_uu` and follows a Levenberg schedule (×10 on failure,
//! ÷2 on success).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::trajectory::{rollout, DynamicalSystem, Trajectory};

/// Second-order expansion of a stage cost.
#[derive(Debug, Clone)]
pub struct StageDerivatives {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    /// `∂²l / ∂u∂x`, shape `(nu, nx)`.
    pub lux: DMatrix<f64>,
}

impl StageDerivatives {
    pub fn zeros(nx: usize, nu: usize) -> Self {
        Self {
            lx: DVector::zeros(nx),
            lu: DVector::zeros(nu),
            lxx: DMatrix::zeros(nx, nx),
            luu: DMatrix::zeros(nu, nu),
            lux: DMatrix::zeros(nu, nx),
        }
    }
}

/// Second-order expansion of the terminal cost.
#[derive(Debug, Clone)]
pub struct TerminalDerivatives {
    pub lx: DVector<f64>,
    pub lxx: DMatrix<f64>,
}

impl TerminalDerivatives {
    pub fn zeros(nx: usize) -> Self {
        Self {
            lx: DVector::zeros(nx),
            lxx: DMatrix::zeros(nx, nx),
        }
    }
}

/// An unconstrained optimal-control problem: dynamics plus stage and terminal
/// costs with their derivative providers.
pub trait DdpProblem: Sync {
    fn system(&self) -> &dyn DynamicalSystem;
    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64;
    fn terminal_cost(&self, x: &DVector<f64>) -> f64;
    fn stage_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> StageDerivatives;
    fn terminal_derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives;
}

/// Total cost of `traj` under `problem`.
pub fn trajectory_cost(problem: &(impl DdpProblem + ?Sized), traj: &Trajectory) -> f64 {
    let states = traj.states();
    let stage: f64 = traj
        .controls()
        .iter()
        .enumerate()
        .map(|(k, u)| problem.stage_cost(&states[k], u, k))
        .sum();
    stage + problem.terminal_cost(traj.final_state())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DdpSettings {
    pub max_iterations: usize,
    /// Stop once an accepted iteration reduces the cost by less than this.
    pub cost_reduction_tol: f64,
    pub regularization_init: f64,
    pub regularization_min: f64,
    pub regularization_max: f64,
    /// Backtracking multipliers, strictly decreasing and starting at 1.
    pub line_search_steps: Vec<f64>,
    /// Armijo-style acceptance ratio of actual over expected reduction.
    pub min_reduction_ratio: f64,
}

impl Default for DdpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            cost_reduction_tol: 1e-9,
            regularization_init: 1e-6,
            regularization_min: 1e-9,
            regularization_max: 1e9,
            line_search_steps: (0..=10).map(|i| 0.5f64.powi(i)).collect(),
            min_reduction_ratio: 1e-4,
        }
    }
}

impl DdpSettings {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("ddp settings: {msg}")));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.cost_reduction_tol > 0.0) {
            return bad("cost_reduction_tol must be positive");
        }
        if !(0.0 < self.regularization_min
            && self.regularization_min <= self.regularization_init
            && self.regularization_init <= self.regularization_max)
        {
            return bad("need 0 < regularization_min <= regularization_init <= regularization_max");
        }
        if self.line_search_steps.first() != Some(&1.0) {
            return bad("line_search_steps must start at 1");
        }
        if self.line_search_steps.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
            return bad("line_search_steps must be strictly decreasing and positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DdpError {
    #[error("regularized Q_uu is not positive definite at step {step}")]
    NotPositiveDefinite { step: usize },
    #[error("rollout diverged at step {step}")]
    RolloutDiverged { step: usize },
    #[error(transparent)]
    Input(#[from] Error),
}

/// Output of one backward sweep.
#[derive(Debug, Clone)]
pub struct BackwardPass {
    /// Feedback gains `K_k`, shape `(nu, nx)`.
    pub gains: Vec<DMatrix<f64>>,
    /// Feedforward terms `k_k`.
    pub feedforward: Vec<DVector<f64>>,
    /// `Σ k_kᵀ Q_u` (non-positive).
    pub expected_linear: f64,
    /// `½ Σ k_kᵀ Q_uu k_k`.
    pub expected_quadratic: f64,
    /// First-order value derivative `V_x` at the initial state.
    pub value_gradient: DVector<f64>,
}

impl BackwardPass {
    /// Predicted cost reduction for a forward pass with multiplier `step`.
    pub fn expected_reduction(&self, step: f64) -> f64 {
        -(step * self.expected_linear + step * step * self.expected_quadratic)
    }
}

/// Backward sweep around `traj` with `reg` added to the diagonal of `Q_uu`.
pub fn backward_pass(
    problem: &(impl DdpProblem + ?Sized),
    traj: &Trajectory,
    reg: f64,
) -> Result<BackwardPass, DdpError> {
    let linearization = linearize(problem, traj)?;
    backward_sweep(traj, &linearization, reg)
}

struct Linearization {
    jacobians: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    stage: Vec<StageDerivatives>,
    terminal: TerminalDerivatives,
}

fn linearize(problem: &(impl DdpProblem + ?Sized), traj: &Trajectory) -> Result<Linearization, DdpError> {
    let system = problem.system();
    let states = traj.states();
    let mut jacobians = Vec::with_capacity(traj.controls().len());
    let mut stage = Vec::with_capacity(traj.controls().len());
    for (k, u) in traj.controls().iter().enumerate() {
        jacobians.push(system.jacobians(&states[k], u)?);
        stage.push(problem.stage_derivatives(&states[k], u, k));
    }
    let terminal = problem.terminal_derivatives(traj.final_state());
    Ok(Linearization {
        jacobians,
        stage,
        terminal,
    })
}

fn backward_sweep(traj: &Trajectory, lin: &Linearization, reg: f64) -> Result<BackwardPass, DdpError> {
    let n = traj.controls().len();
    let nu = traj.control_dim();
    let mut vx = lin.terminal.lx.clone();
    let mut vxx = lin.terminal.lxx.clone();
    let mut gains = vec![DMatrix::zeros(0, 0); n];
    let mut feedforward = vec![DVector::zeros(0); n];
    let mut expected_linear = 0.0;
    let mut expected_quadratic = 0.0;

    for k in (0..n).rev() {
        let (a, b) = &lin.jacobians[k];
        let d = &lin.stage[k];
        let bt_vxx = b.transpose() * &vxx;
        let qx = &d.lx + a.transpose() * &vx;
        let qu = &d.lu + b.transpose() * &vx;
        let qxx = &d.lxx + a.transpose() * &vxx * a;
        let quu = &d.luu + &bt_vxx * b;
        let qux = &d.lux + &bt_vxx * a;

        let quu_reg = &quu + DMatrix::identity(nu, nu) * reg;
        let chol = quu_reg.cholesky().ok_or(DdpError::NotPositiveDefinite { step: k })?;
        let kff = -chol.solve(&qu);
        let gain = -chol.solve(&qux);

        let quu_k = &quu * &kff;
        expected_linear += kff.dot(&qu);
        expected_quadratic += 0.5 * kff.dot(&quu_k);

        vx = &qx + gain.transpose() * (&quu_k + &qu) + qux.transpose() * &kff;
        let v = &qxx + gain.transpose() * &quu * &gain + gain.transpose() * &qux + qux.transpose() * &gain;
        vxx = (&v + v.transpose()) * 0.5;

        gains[k] = gain;
        feedforward[k] = kff;
    }
    Ok(BackwardPass {
        gains,
        feedforward,
        expected_linear,
        expected_quadratic,
        value_gradient: vx,
    })
}

/// Rolls out `u_k = ū_k + step·k_k + K_k (x_k − x̄_k)` from the initial state
/// of `traj` and returns the new trajectory with its cost.
pub fn forward_pass(
    problem: &(impl DdpProblem + ?Sized),
    traj: &Trajectory,
    gains: &BackwardPass,
    step: f64,
) -> Result<(Trajectory, f64), DdpError> {
    let system = problem.system();
    let ref_states = traj.states();
    let mut states = Vec::with_capacity(traj.horizon());
    let mut controls = Vec::with_capacity(traj.controls().len());
    let mut x = traj.initial_state().clone();
    let mut cost = 0.0;
    for (k, u_ref) in traj.controls().iter().enumerate() {
        let u = u_ref + &gains.feedforward[k] * step + &gains.gains[k] * (&x - &ref_states[k]);
        let next = system.step(&x, &u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(DdpError::RolloutDiverged { step: k });
        }
        cost += problem.stage_cost(&x, &u, k);
        states.push(x);
        controls.push(u);
        x = next;
    }
    cost += problem.terminal_cost(&x);
    states.push(x);
    if !cost.is_finite() {
        return Err(DdpError::RolloutDiverged { step: controls.len() });
    }
    let traj = Trajectory::new(states, controls, traj.dt())?;
    Ok((traj, cost))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DdpStatus {
    Converged,
    MaxIterations,
    /// Regularization exceeded its maximum without an accepted step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct DdpSolution {
    pub trajectory: Trajectory,
    pub total_cost: f64,
    /// Number of accepted iterations.
    pub iterations: usize,
    pub converged: bool,
    pub status: DdpStatus,
    pub feedback_gains: Vec<DMatrix<f64>>,
    pub feedforward: Vec<DVector<f64>>,
    /// Cost after each accepted iteration, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Solves `problem` starting from the controls of `init`.
///
/// The states of `init` are recomputed by a rollout from its initial state,
/// so only `init.initial_state()` and the controls matter.
pub fn solve(
    problem: &(impl DdpProblem + ?Sized),
    init: &Trajectory,
    settings: &DdpSettings,
) -> Result<DdpSolution, DdpError> {
    settings.validate()?;
    let system = problem.system();
    let mut traj = rollout(system, init.initial_state(), init.controls())?;
    if let Some(k) = traj.states().iter().position(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(DdpError::RolloutDiverged {
            step: k.saturating_sub(1),
        });
    }
    let mut cost = trajectory_cost(problem, &traj);
    if !cost.is_finite() {
        return Err(DdpError::RolloutDiverged { step: 0 });
    }

    let mut reg = settings.regularization_init;
    let mut history = vec![cost];
    let mut status = DdpStatus::MaxIterations;
    let mut last_pass: Option<BackwardPass> = None;
    let mut linearization = linearize(problem, &traj)?;

    let mut accepted = 0;
    let mut attempts = 0;
    // Each accepted iteration counts against the budget; failed attempts
    // only raise the regularization.
    while accepted < settings.max_iterations {
        attempts += 1;
        if attempts > 50 * settings.max_iterations {
            status = DdpStatus::Stalled;
            break;
        }
        let pass = match backward_sweep(&traj, &linearization, reg) {
            Ok(pass) => pass,
            Err(DdpError::NotPositiveDefinite { .. }) => {
                reg *= 10.0;
                if reg > settings.regularization_max {
                    status = DdpStatus::Stalled;
                    break;
                }
                continue;
            }
            Err(e) => return Err(e),
        };

        let full_expected = pass.expected_reduction(1.0);
        let mut step_taken = None;
        for &step in &settings.line_search_steps {
            let Ok((candidate, new_cost)) = forward_pass(problem, &traj, &pass, step) else {
                continue;
            };
            let improvement = cost - new_cost;
            let expected = pass.expected_reduction(step);
            let ok = if full_expected < settings.cost_reduction_tol {
                // Already at a stationary point: take the step only if it
                // does not increase the cost.
                new_cost <= cost
            } else {
                expected > 0.0 && improvement >= settings.min_reduction_ratio * expected
            };
            if ok {
                step_taken = Some((candidate, new_cost));
                break;
            }
            if full_expected < settings.cost_reduction_tol {
                break;
            }
        }

        match step_taken {
            Some((candidate, new_cost)) => {
                let reduction = cost - new_cost;
                traj = candidate;
                cost = new_cost;
                history.push(cost);
                accepted += 1;
                reg = (reg / 2.0).max(settings.regularization_min);
                last_pass = Some(pass);
                if reduction < settings.cost_reduction_tol {
                    status = DdpStatus::Converged;
                    break;
                }
                linearization = linearize(problem, &traj)?;
            }
            None if full_expected < settings.cost_reduction_tol => {
                last_pass = Some(pass);
                status = DdpStatus::Converged;
                break;
            }
            None => {
                reg = (reg * 10.0).max(settings.regularization_min);
                if reg > settings.regularization_max {
                    status = DdpStatus::Stalled;
                    break;
                }
            }
        }
    }

    let (feedback_gains, feedforward) = match last_pass {
        Some(p) => (p.gains, p.feedforward),
        None => (Vec::new(), Vec::new()),
    };
    Ok(DdpSolution {
        trajectory: traj,
        total_cost: cost,
        iterations: accepted,
        converged: status == DdpStatus::Converged,
        status,
        feedback_gains,
        feedforward,
        cost_history: history,
    })
}
