use std::time::Instant;

use log::{debug, info};
use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::coupling::{
    adapt_penalty, dual_update, trajectory_norm, AccelerationConfig, ConstraintId, CouplingState, PerConstraint,
};
use super::penalty::{AugmentedProblem, CouplingMap, PenaltyTerm, Support};
use crate::ddp::{self, DdpProblem, DdpSettings, DdpStatus};
use crate::error::{Error, Result};
use crate::projection::{project_block, AdmissibleSets, ProjectionVars};
use crate::trajectory::Trajectory;

/// A problem split into a whole-body block, an optional centroidal block and
/// a projection block.
///
/// Consensus ids `{c, h, λ}` are active when both blocks expose a map;
/// projection ids `{j, t, f}` are active when the whole-body block does.
pub trait SplitModel: Sync {
    fn wholebody(&self) -> &dyn DdpProblem;
    fn centroidal(&self) -> Option<&dyn DdpProblem> {
        None
    }
    fn wholebody_map(&self, id: ConstraintId) -> Option<&dyn CouplingMap>;
    fn centroidal_map(&self, _id: ConstraintId) -> Option<&dyn CouplingMap> {
        None
    }
    fn sets(&self) -> &AdmissibleSets;
}

fn is_active(model: &dyn SplitModel, id: ConstraintId) -> bool {
    if id.is_projection() {
        model.wholebody_map(id).is_some()
    } else {
        model.centroidal().is_some() && model.wholebody_map(id).is_some() && model.centroidal_map(id).is_some()
    }
}

/// Residual trajectories per id; `None` for inactive ids.
pub type Residuals = PerConstraint<Option<Vec<DVector<f64>>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingCriteria {
    /// Primal tolerances on the stacked 2-norm of each residual trajectory.
    pub eps_pri: PerConstraint<f64>,
    /// Tolerance on the change of the whole-body local cost.
    pub eps_cost: f64,
    pub max_iterations: usize,
}

impl Default for StoppingCriteria {
    fn default() -> Self {
        Self {
            eps_pri: PerConstraint {
                c: 1e-3,
                h: 1e-1,
                lambda: 1.0,
                j: 1e-3,
                t: 1e-3,
                f: 1e-3,
            },
            eps_cost: 1e-3,
            max_iterations: 50,
        }
    }
}

impl StoppingCriteria {
    pub fn validate(&self) -> Result<()> {
        for (id, &e) in self.eps_pri.iter() {
            if !(e > 0.0) {
                return Err(Error::InvalidInput(format!("eps_pri.{id} must be positive, got {e}")));
            }
        }
        if !(self.eps_cost > 0.0) {
            return Err(Error::InvalidInput(format!(
                "eps_cost must be positive, got {}",
                self.eps_cost
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmSettings {
    pub acceleration: AccelerationConfig,
    pub stopping: StoppingCriteria,
    /// Initial penalties.
    pub rho: PerConstraint<f64>,
    pub wholebody_ddp: DdpSettings,
    pub centroidal_ddp: DdpSettings,
    /// Iterations at which both sides of the CoM consensus are stored.
    pub snapshot_iterations: Vec<usize>,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            acceleration: AccelerationConfig::default(),
            stopping: StoppingCriteria::default(),
            rho: PerConstraint::from_fn(|_| 1.0),
            wholebody_ddp: DdpSettings {
                max_iterations: 20,
                ..DdpSettings::default()
            },
            centroidal_ddp: DdpSettings {
                max_iterations: 20,
                ..DdpSettings::default()
            },
            snapshot_iterations: Vec::new(),
        }
    }
}

impl AdmmSettings {
    pub fn validate(&self) -> Result<()> {
        self.acceleration.validate()?;
        self.stopping.validate()?;
        self.wholebody_ddp.validate()?;
        self.centroidal_ddp.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Centroidal,
    WholeBody,
    Projection,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    Converged,
    MaxIterations,
}

/// Everything observed during one ADMM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Unrelaxed primal residual norms; zero for inactive ids.
    pub primal_residual: PerConstraint<f64>,
    /// Dual residual norms (projection ids only).
    pub dual_residual: PerConstraint<f64>,
    /// Penalties used during this iteration.
    pub rho: PerConstraint<f64>,
    pub wholebody_cost: f64,
    pub centroidal_cost: f64,
    pub wholebody_penalty: f64,
    pub centroidal_penalty: f64,
    /// Seconds spent on this iteration.
    pub wall_time: f64,
    /// Blocks in execution order.
    pub order: Vec<Block>,
    pub wholebody_ddp_iterations: usize,
    pub centroidal_ddp_iterations: usize,
    pub wholebody_stalled: bool,
    pub centroidal_stalled: bool,
    pub decision: StopDecision,
}

/// Both sides of the CoM consensus at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub wholebody: Vec<DVector<f64>>,
    pub centroidal: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmTrace {
    pub active: PerConstraint<bool>,
    /// Whole-body local cost of the warm start.
    pub initial_wholebody_cost: f64,
    pub records: Vec<IterationRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl AdmmTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Converged iff every active residual is within tolerance and the
/// whole-body local cost moved by at most `eps_cost`; otherwise stops at the
/// iteration cap.
pub fn check_stopping(trace: &AdmmTrace, criteria: &StoppingCriteria) -> StopDecision {
    let Some(last) = trace.records.last() else {
        return StopDecision::Continue;
    };
    let residuals_ok = ConstraintId::ALL
        .iter()
        .filter(|&&id| trace.active[id])
        .all(|&id| last.primal_residual[id] <= criteria.eps_pri[id]);
    let previous = match trace.records.len() {
        1 => trace.initial_wholebody_cost,
        n => trace.records[n - 2].wholebody_cost,
    };
    let cost_ok = (last.wholebody_cost - previous).abs() <= criteria.eps_cost;
    if residuals_ok && cost_ok {
        StopDecision::Converged
    } else if last.iteration >= criteria.max_iterations {
        StopDecision::MaxIterations
    } else {
        StopDecision::Continue
    }
}

fn values(map: &dyn CouplingMap, traj: &Trajectory) -> Vec<DVector<f64>> {
    map.eval_along(traj)
}

fn difference(a: &[DVector<f64>], b: &[DVector<f64>]) -> Vec<DVector<f64>> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn forces_as_vectors(forces: &[Vector2<f64>]) -> Vec<DVector<f64>> {
    forces
        .iter()
        .map(|f| DVector::from_column_slice(f.as_slice()))
        .collect()
}

fn copy_values(copies: &ProjectionVars, id: ConstraintId) -> Vec<DVector<f64>> {
    match id {
        ConstraintId::StateBox => copies.states.clone(),
        ConstraintId::ControlBox => copies.controls.clone(),
        ConstraintId::FrictionCone => forces_as_vectors(&copies.forces),
        _ => unreachable!("{id} has no projection copy"),
    }
}

fn to_forces(values: &[DVector<f64>]) -> Result<Vec<Vector2<f64>>> {
    values
        .iter()
        .map(|v| {
            if v.len() == 2 {
                Ok(Vector2::new(v[0], v[1]))
            } else {
                Err(Error::DimensionMismatch {
                    context: "friction-cone map",
                    expected: 2,
                    found: v.len(),
                })
            }
        })
        .collect()
}

/// Assembles projection inputs `(s, u, g_λ)` from per-id sequences.
fn projection_vars(model: &dyn SplitModel, seq: &PerConstraint<Vec<DVector<f64>>>) -> Result<ProjectionVars> {
    let take = |id| {
        if is_active(model, id) {
            seq[id].clone()
        } else {
            Vec::new()
        }
    };
    Ok(ProjectionVars {
        states: take(ConstraintId::StateBox),
        controls: take(ConstraintId::ControlBox),
        forces: to_forces(&take(ConstraintId::FrictionCone))?,
    })
}

/// Primal residuals `r_c, r_h, r_λ` (whole-body minus centroidal) and
/// `r_j, r_t, r_f` (whole-body minus projection copy).
pub fn compute_residuals(
    model: &dyn SplitModel,
    wholebody: &Trajectory,
    centroidal: Option<&Trajectory>,
    copies: &ProjectionVars,
) -> Result<Residuals> {
    if let Some(cen) = centroidal {
        if cen.horizon() != wholebody.horizon() {
            return Err(Error::DimensionMismatch {
                context: "centroidal horizon",
                expected: wholebody.horizon(),
                found: cen.horizon(),
            });
        }
    }
    let mut out = PerConstraint::from_fn(|_| None);
    for id in ConstraintId::ALL {
        if !is_active(model, id) {
            continue;
        }
        let wbd = values(model.wholebody_map(id).expect("active"), wholebody);
        let other = if id.is_projection() {
            copy_values(copies, id)
        } else {
            let cen = centroidal
                .ok_or_else(|| Error::InvalidInput(format!("constraint {id} needs a centroidal trajectory")))?;
            values(model.centroidal_map(id).expect("active"), cen)
        };
        if other.len() != wbd.len() {
            return Err(Error::DimensionMismatch {
                context: "residual horizon",
                expected: wbd.len(),
                found: other.len(),
            });
        }
        out[id] = Some(difference(&wbd, &other));
    }
    Ok(out)
}

/// Initial trajectories for [`solve_admm`].
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub wholebody: Trajectory,
    pub centroidal: Option<Trajectory>,
}

#[derive(Debug, Clone)]
pub struct AdmmResult {
    pub wholebody: Trajectory,
    pub centroidal: Option<Trajectory>,
    pub copies: ProjectionVars,
    pub coupling: CouplingState,
    pub trace: AdmmTrace,
    pub decision: StopDecision,
}

impl AdmmResult {
    pub fn converged(&self) -> bool {
        self.decision == StopDecision::Converged
    }
}

fn run_ddp(
    block: &'static str,
    problem: &AugmentedProblem<'_>,
    init: &Trajectory,
    settings: &DdpSettings,
) -> Result<(Trajectory, usize, bool, f64)> {
    let sol = ddp::solve(problem, init, settings).map_err(|e| Error::SubSolver {
        block,
        message: e.to_string(),
    })?;
    let stalled = sol.status == DdpStatus::Stalled;
    if stalled {
        debug!("{block} DDP stalled after {} iterations", sol.iterations);
    }
    let penalty = problem.penalty_cost(&sol.trajectory);
    Ok((sol.trajectory, sol.iterations, stalled, penalty))
}

/// Gauss-Seidel multi-block ADMM: centroidal DDP, whole-body DDP, relaxation,
/// projection, dual update, penalty adaptation and stopping test, in that
/// order, each iteration warm-started from the previous one.
pub fn solve_admm(model: &dyn SplitModel, init: WarmStart, settings: &AdmmSettings) -> Result<AdmmResult> {
    settings.validate()?;
    let sets = model.sets();
    sets.validate()?;
    if model.centroidal().is_some() != init.centroidal.is_some() {
        return Err(Error::InvalidInput(
            "centroidal warm start must be given exactly when the model has a centroidal block".into(),
        ));
    }
    let horizon = init.wholebody.horizon();
    let mut wholebody = init.wholebody;
    let mut centroidal = init.centroidal;
    if let Some(cen) = &centroidal {
        if cen.horizon() != horizon {
            return Err(Error::DimensionMismatch {
                context: "centroidal warm-start horizon",
                expected: horizon,
                found: cen.horizon(),
            });
        }
    }

    let active = PerConstraint::from_fn(|id| is_active(model, id));
    let shapes = PerConstraint::from_fn(|id| {
        active[id].then(|| {
            let map = model.wholebody_map(id).expect("active");
            let n = match map.support() {
                Support::State => horizon,
                Support::StateControl => horizon - 1,
            };
            (n, map.dim())
        })
    });
    let mut coupling = CouplingState::new(&settings.rho, &shapes)?;

    let wbd_values = |traj: &Trajectory| {
        PerConstraint::from_fn(|id| {
            if active[id] {
                values(model.wholebody_map(id).expect("active"), traj)
            } else {
                Vec::new()
            }
        })
    };
    let zero_duals = projection_vars(
        model,
        &PerConstraint::from_fn(|id| shapes[id].map_or_else(Vec::new, |(n, d)| vec![DVector::zeros(d); n])),
    )?;
    let mut copies = project_block(&projection_vars(model, &wbd_values(&wholebody))?, &zero_duals, sets)?;

    let mut trace = AdmmTrace {
        active,
        initial_wholebody_cost: ddp::trajectory_cost(model.wholebody(), &wholebody),
        records: Vec::new(),
        snapshots: Vec::new(),
    };
    let accel = &settings.acceleration;
    let alpha = accel.effective_alpha();
    let mut decision = StopDecision::Continue;

    for iteration in 1..=settings.stopping.max_iterations {
        let start = Instant::now();
        let rho_used = coupling.rho();
        let mut order = Vec::with_capacity(4);

        // Centroidal block against frozen whole-body values.
        let mut cen_stats = (0, false, 0.0, 0.0);
        if let (Some(base), Some(cen)) = (model.centroidal(), centroidal.as_ref()) {
            let wbd = wbd_values(&wholebody);
            let terms = ConstraintId::ALL
                .into_iter()
                .filter(|id| active[*id] && !id.is_projection())
                .map(|id| PenaltyTerm {
                    map: model.centroidal_map(id).expect("active"),
                    rho: coupling[id].rho,
                    targets: wbd[id].iter().zip(&coupling[id].dual).map(|(m, w)| m + w).collect(),
                })
                .collect();
            let problem = AugmentedProblem::new(base, horizon, terms);
            let (traj, iters, stalled, penalty) = run_ddp("centroidal", &problem, cen, &settings.centroidal_ddp)?;
            cen_stats = (iters, stalled, ddp::trajectory_cost(base, &traj), penalty);
            centroidal = Some(traj);
            order.push(Block::Centroidal);
        }

        // Whole-body block against frozen centroidal values and copies.
        let cen_values = PerConstraint::from_fn(|id| match (&centroidal, model.centroidal_map(id)) {
            (Some(traj), Some(map)) if active[id] && !id.is_projection() => values(map, traj),
            _ => Vec::new(),
        });
        let terms = ConstraintId::ALL
            .into_iter()
            .filter(|id| active[*id])
            .map(|id| {
                let other = if id.is_projection() {
                    copy_values(&copies, id)
                } else {
                    cen_values[id].clone()
                };
                PenaltyTerm {
                    map: model.wholebody_map(id).expect("active"),
                    rho: coupling[id].rho,
                    targets: other.iter().zip(&coupling[id].dual).map(|(o, w)| o - w).collect(),
                }
            })
            .collect();
        let problem = AugmentedProblem::new(model.wholebody(), horizon, terms);
        let (traj, wbd_iters, wbd_stalled, wbd_penalty) =
            run_ddp("whole-body", &problem, &wholebody, &settings.wholebody_ddp)?;
        wholebody = traj;
        order.push(Block::WholeBody);

        // Relaxation and projection.
        let primal = wbd_values(&wholebody);
        let relaxed = PerConstraint::from_fn(|id| {
            if active[id] && id.is_projection() {
                super::coupling::relax(&primal[id], &copy_values(&copies, id), alpha)
            } else {
                Vec::new()
            }
        });
        let duals = projection_vars(model, &coupling.constraints.map(|_, s| s.dual.clone()))?;
        let new_copies = project_block(&projection_vars(model, &relaxed)?, &duals, sets)?;
        order.push(Block::Projection);

        // Residuals and dual update.
        let residuals = compute_residuals(model, &wholebody, centroidal.as_ref(), &new_copies)?;
        let mut dual_step = residuals.clone();
        for id in ConstraintId::ALL
            .into_iter()
            .filter(|id| active[*id] && id.is_projection())
        {
            let copy_new = copy_values(&new_copies, id);
            dual_step[id] = Some(difference(&relaxed[id], &copy_new));
            let copy_old = copy_values(&copies, id);
            let rho = coupling[id].rho;
            coupling[id].dual_residual = copy_new.iter().zip(&copy_old).map(|(a, b)| (a - b) * rho).collect();
        }
        dual_update(&mut coupling, &dual_step)?;
        for id in ConstraintId::ALL {
            if let Some(r) = &residuals[id] {
                coupling[id].primal_residual = r.clone();
            }
        }
        copies = new_copies;
        order.push(Block::Dual);

        if active.c && settings.snapshot_iterations.contains(&iteration) {
            if let Some(cen) = &centroidal {
                trace.snapshots.push(Snapshot {
                    iteration,
                    wholebody: primal.c.clone(),
                    centroidal: values(model.centroidal_map(ConstraintId::Com).expect("active"), cen),
                });
            }
        }

        trace.records.push(IterationRecord {
            iteration,
            primal_residual: residuals.map(|_, r| r.as_deref().map_or(0.0, trajectory_norm)),
            dual_residual: coupling.constraints.map(|_, s| s.dual_norm()),
            rho: rho_used,
            wholebody_cost: ddp::trajectory_cost(model.wholebody(), &wholebody),
            centroidal_cost: cen_stats.2,
            wholebody_penalty: wbd_penalty,
            centroidal_penalty: cen_stats.3,
            wall_time: 0.0,
            order,
            wholebody_ddp_iterations: wbd_iters,
            centroidal_ddp_iterations: cen_stats.0,
            wholebody_stalled: wbd_stalled,
            centroidal_stalled: cen_stats.1,
            decision: StopDecision::Continue,
        });

        adapt_penalty(&mut coupling, accel, iteration);
        decision = check_stopping(&trace, &settings.stopping);
        let record = trace.records.last_mut().expect("just pushed");
        record.decision = decision;
        record.wall_time = start.elapsed().as_secs_f64();
        debug!(
            "admm iter {iteration}: r = {:?}, L_wbd = {:.6e}",
            record.primal_residual, record.wholebody_cost
        );
        if decision != StopDecision::Continue {
            break;
        }
    }
    info!("admm finished after {} iterations: {:?}", trace.records.len(), decision);
    Ok(AdmmResult {
        wholebody,
        centroidal,
        copies,
        coupling,
        trace,
        decision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::IdentityMap as Identity;
    use crate::ddp::tests::{LinearSystem, Lqr};
    use crate::trajectory::rollout;
    use nalgebra::{dvector, DMatrix};

    /// Double integrator tracking a far target under a control box.
    struct Boxed {
        lqr: Lqr,
        u_map: Identity,
        x_map: Identity,
        sets: AdmissibleSets,
        with_state_box: bool,
    }

    impl SplitModel for Boxed {
        fn wholebody(&self) -> &dyn DdpProblem {
            &self.lqr
        }
        fn wholebody_map(&self, id: ConstraintId) -> Option<&dyn CouplingMap> {
            match id {
                ConstraintId::ControlBox => Some(&self.u_map),
                ConstraintId::StateBox if self.with_state_box => Some(&self.x_map),
                _ => None,
            }
        }
        fn sets(&self) -> &AdmissibleSets {
            &self.sets
        }
    }

    fn boxed(limit: f64, with_state_box: bool) -> Boxed {
        let lqr = Lqr {
            sys: LinearSystem {
                a: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
                b: DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
            },
            q: DMatrix::identity(2, 2) * 0.1,
            r: DMatrix::identity(1, 1) * 0.01,
            qf: DMatrix::identity(2, 2) * 100.0,
        };
        let mut sets = AdmissibleSets::unbounded(2, 1);
        sets.control_lower[0] = -limit;
        sets.control_upper[0] = limit;
        Boxed {
            lqr,
            u_map: Identity {
                support: Support::StateControl,
                dim: 1,
            },
            x_map: Identity {
                support: Support::State,
                dim: 2,
            },
            sets,
            with_state_box,
        }
    }

    fn warm(model: &Boxed) -> WarmStart {
        let traj = rollout(&model.lqr.sys, &dvector![3.0, 0.0], &vec![dvector![0.0]; 40]).unwrap();
        WarmStart {
            wholebody: traj,
            centroidal: None,
        }
    }

    fn settings() -> AdmmSettings {
        AdmmSettings {
            rho: PerConstraint::from_fn(|_| 10.0),
            stopping: StoppingCriteria {
                max_iterations: 300,
                eps_cost: 1e-4,
                ..StoppingCriteria::default()
            },
            ..AdmmSettings::default()
        }
    }

    #[test]
    fn residuals_vanish_at_consensus() {
        let model = boxed(1e3, true);
        let ws = warm(&model);
        let copies = ProjectionVars {
            states: ws.wholebody.states().to_vec(),
            controls: ws.wholebody.controls().to_vec(),
            forces: vec![],
        };
        let r = compute_residuals(&model, &ws.wholebody, None, &copies).unwrap();
        assert_eq!(trajectory_norm(r.t.as_ref().unwrap()), 0.0);
        assert_eq!(trajectory_norm(r.j.as_ref().unwrap()), 0.0);
        assert!(r.c.is_none());

        let mut shifted = copies.clone();
        shifted.states[7][0] -= 1.0;
        let r = compute_residuals(&model, &ws.wholebody, None, &shifted).unwrap();
        assert_eq!(trajectory_norm(r.j.as_ref().unwrap()), 1.0);
    }

    #[test]
    fn gauss_seidel_order_is_recorded() {
        let model = boxed(0.5, false);
        let out = solve_admm(&model, warm(&model), &settings()).unwrap();
        for rec in &out.trace.records {
            assert_eq!(rec.order, vec![Block::WholeBody, Block::Projection, Block::Dual]);
        }
    }

    #[test]
    fn feasible_optimum_keeps_copies_equal() {
        let model = boxed(1e3, true);
        let mut s = settings();
        s.acceleration.variant = crate::admm::Variant::Vanilla;
        s.stopping.max_iterations = 5;
        let mut ws = warm(&model);
        let sol = ddp::solve(&model.lqr, &ws.wholebody, &DdpSettings::default()).unwrap();
        ws.wholebody = sol.trajectory;
        let out = solve_admm(&model, ws, &s).unwrap();
        for rec in &out.trace.records {
            assert!(rec.primal_residual.t <= 1e-12 && rec.primal_residual.j <= 1e-12);
        }
        assert!(out.converged());
    }

    #[test]
    fn variants_drive_controls_into_the_box() {
        for variant in crate::admm::Variant::ALL {
            let model = boxed(0.5, false);
            let mut s = settings();
            s.acceleration.variant = variant;
            s.acceleration.k_sw = 5;
            let out = solve_admm(&model, warm(&model), &s).unwrap();
            let first = out.trace.records[0].primal_residual.t;
            let last = out.trace.last().unwrap().primal_residual.t;
            assert!(last < 0.05 * first, "{variant}: {first} -> {last}");
            if variant != crate::admm::Variant::VaryingPenalty {
                assert!(out.converged(), "{variant}: {:?}", out.trace.last());
            }
            let max_u = out.wholebody.controls().iter().map(|u| u[0].abs()).fold(0.0, f64::max);
            assert!(max_u <= 0.5 + 2e-2, "{variant}: {max_u}");
            // The limit is active for this target.
            assert!(max_u >= 0.49, "{variant}: {max_u}");
            let max_copy = out.copies.controls.iter().map(|u| u[0].abs()).fold(0.0, f64::max);
            assert!(max_copy <= 0.5);
        }
    }

    #[test]
    fn invalid_settings_fail_before_iterating() {
        let model = boxed(0.5, false);
        let mut s = settings();
        s.acceleration.alpha = 2.5;
        assert!(solve_admm(&model, warm(&model), &s).is_err());
        let mut s = settings();
        s.stopping.max_iterations = 0;
        assert!(solve_admm(&model, warm(&model), &s).is_err());
    }

    fn record(r: f64, cost: f64, iteration: usize) -> IterationRecord {
        IterationRecord {
            iteration,
            primal_residual: PerConstraint::from_fn(|_| r),
            dual_residual: PerConstraint::default(),
            rho: PerConstraint::from_fn(|_| 1.0),
            wholebody_cost: cost,
            centroidal_cost: 0.0,
            wholebody_penalty: 0.0,
            centroidal_penalty: 0.0,
            wall_time: 0.0,
            order: vec![],
            wholebody_ddp_iterations: 0,
            centroidal_ddp_iterations: 0,
            wholebody_stalled: false,
            centroidal_stalled: false,
            decision: StopDecision::Continue,
        }
    }

    #[test]
    fn stopping_truth_table() {
        let criteria = StoppingCriteria {
            eps_pri: PerConstraint::from_fn(|_| 1e-3),
            eps_cost: 1e-3,
            max_iterations: 50,
        };
        let trace = |records: Vec<IterationRecord>| AdmmTrace {
            active: PerConstraint::from_fn(|_| true),
            initial_wholebody_cost: 10.0,
            records,
            snapshots: vec![],
        };
        // Residuals small, cost still moving.
        let t = trace(vec![record(1e-4, 10.0, 1), record(1e-4, 9.0, 2)]);
        assert_eq!(check_stopping(&t, &criteria), StopDecision::Continue);
        // Both satisfied.
        let t = trace(vec![record(1e-4, 9.0, 1), record(1e-4, 9.0005, 2)]);
        assert_eq!(check_stopping(&t, &criteria), StopDecision::Converged);
        // Cost settled, residual too large.
        let t = trace(vec![record(1.0, 9.0, 1), record(1.0, 9.0, 2)]);
        assert_eq!(check_stopping(&t, &criteria), StopDecision::Continue);
        // First iteration compares against the warm-start cost.
        let t = trace(vec![record(1e-4, 5.0, 1)]);
        assert_eq!(check_stopping(&t, &criteria), StopDecision::Continue);
        // Iteration cap.
        let t = trace(vec![record(1.0, 9.0, 49), record(1.0, 8.0, 50)]);
        assert_eq!(check_stopping(&t, &criteria), StopDecision::MaxIterations);
        // Inactive ids are ignored.
        let mut t = trace(vec![record(1e-4, 9.0, 1), record(1e-4, 9.0, 2)]);
        t.records[1].primal_residual.h = 1e3;
        assert_eq!(check_stopping(&t, &criteria), StopDecision::Continue);
        t.active.h = false;
        assert_eq!(check_stopping(&t, &criteria), StopDecision::Converged);
    }
}
