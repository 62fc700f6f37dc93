//! Local costs, coupling maps and the three-block split of one walking step.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::centroidal::{self, CentroidalDynamics, CentroidalProblem};
use super::dynamics::{control3, split_state, WalkerDynamics, CONTROL_DIM, STATE_DIM};
use super::kinematics::{Config, WalkerModel};
use crate::admm::{ConstraintId, CouplingMap, IdentityMap, SplitModel, Support};
use crate::ddp::{DdpProblem, StageDerivatives, TerminalDerivatives};
use crate::error::Result;
use crate::numdiff::{finite_diff_jacobian, DEFAULT_STEP};
use crate::projection::AdmissibleSets;
use crate::trajectory::DynamicalSystem;

/// Whole-body local-cost weights.
///
/// Stage: `w_u ‖u‖² + w_s ‖p_sw(q) − r_k‖²`. Terminal: swing tracking plus
/// `w_q ‖q_a − q_a*‖²` over the angular coordinates and `w_v ‖q̇ − q̇*‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WholeBodyWeights {
    pub torque: f64,
    pub swing_foot: f64,
    pub terminal_posture: f64,
    pub terminal_velocity: f64,
}

impl Default for WholeBodyWeights {
    fn default() -> Self {
        Self {
            torque: 1e-3,
            swing_foot: 1e3,
            terminal_posture: 1e3,
            terminal_velocity: 30.0,
        }
    }
}

impl WholeBodyWeights {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            torque: self.torque * factor,
            swing_foot: self.swing_foot * factor,
            terminal_posture: self.terminal_posture * factor,
            terminal_velocity: self.terminal_velocity * factor,
        }
    }
}

/// Angular coordinates `(pitch, hip, knee_st, knee_sw)`.
const ANGLES: std::ops::Range<usize> = 2..6;

pub struct WholeBodyProblem {
    pub dynamics: WalkerDynamics,
    pub weights: WholeBodyWeights,
    /// One swing-foot target per state index.
    pub swing_reference: Vec<Vector2<f64>>,
    pub terminal_posture: Config,
    pub terminal_velocity: Config,
}

impl WholeBodyProblem {
    fn model(&self) -> &WalkerModel {
        &self.dynamics.model
    }

    fn swing_error(&self, q: &Config, k: usize) -> Vector2<f64> {
        self.model().swing_foot.position(q) - self.swing_reference[k]
    }

    /// Adds the Gauss-Newton swing-tracking expansion at index `k`.
    fn add_swing(&self, q: &Config, k: usize, lx: &mut DVector<f64>, lxx: &mut DMatrix<f64>) {
        let w = self.weights.swing_foot;
        let j = self.model().swing_foot.jacobian(q);
        let e = self.swing_error(q, k);
        let g = j.transpose() * e * (2.0 * w);
        let h = j.transpose() * j * (2.0 * w);
        for r in 0..6 {
            lx[r] += g[r];
            for c in 0..6 {
                lxx[(r, c)] += h[(r, c)];
            }
        }
    }
}

impl DdpProblem for WholeBodyProblem {
    fn system(&self) -> &dyn DynamicalSystem {
        &self.dynamics
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        let (q, _) = split_state(x);
        self.weights.torque * u.norm_squared() + self.weights.swing_foot * self.swing_error(&q, k).norm_squared()
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        let (q, v) = split_state(x);
        let k = self.swing_reference.len() - 1;
        let posture: f64 = ANGLES.map(|i| (q[i] - self.terminal_posture[i]).powi(2)).sum();
        let rates = (v - self.terminal_velocity).norm_squared();
        self.weights.swing_foot * self.swing_error(&q, k).norm_squared()
            + self.weights.terminal_posture * posture
            + self.weights.terminal_velocity * rates
    }

    fn stage_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> StageDerivatives {
        let (q, _) = split_state(x);
        let mut d = StageDerivatives::zeros(STATE_DIM, CONTROL_DIM);
        d.lu = u * (2.0 * self.weights.torque);
        d.luu = DMatrix::identity(CONTROL_DIM, CONTROL_DIM) * (2.0 * self.weights.torque);
        self.add_swing(&q, k, &mut d.lx, &mut d.lxx);
        d
    }

    fn terminal_derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        let (q, v) = split_state(x);
        let mut d = TerminalDerivatives::zeros(STATE_DIM);
        self.add_swing(&q, self.swing_reference.len() - 1, &mut d.lx, &mut d.lxx);
        let (wq, wv) = (self.weights.terminal_posture, self.weights.terminal_velocity);
        for i in ANGLES {
            d.lx[i] += 2.0 * wq * (q[i] - self.terminal_posture[i]);
            d.lxx[(i, i)] += 2.0 * wq;
        }
        for i in 0..6 {
            d.lx[6 + i] += 2.0 * wv * (v[i] - self.terminal_velocity[i]);
            d.lxx[(6 + i, 6 + i)] += 2.0 * wv;
        }
        d
    }
}

/// Whole-body CoM `CoM(q)`.
pub struct ComMap {
    pub model: WalkerModel,
}

impl CouplingMap for ComMap {
    fn dim(&self) -> usize {
        2
    }
    fn support(&self) -> Support {
        Support::State
    }
    fn eval(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        let (q, _) = split_state(x);
        let c = self.model.com_position(&q);
        DVector::from_column_slice(c.as_slice())
    }
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (q, _) = split_state(x);
        let mut jx = DMatrix::zeros(2, STATE_DIM);
        jx.view_mut((0, 0), (2, 6)).copy_from(&self.model.com_jacobian(&q));
        Ok((jx, DMatrix::zeros(2, u.len())))
    }
}

/// Whole-body centroidal momentum `A_g(q) q̇`.
pub struct MomentumMap {
    pub model: WalkerModel,
}

impl CouplingMap for MomentumMap {
    fn dim(&self) -> usize {
        3
    }
    fn support(&self) -> Support {
        Support::State
    }
    fn eval(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        let (q, v) = split_state(x);
        let h = self.model.centroidal_momentum_matrix(&q) * v;
        DVector::from_column_slice(h.as_slice())
    }
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (q, v) = split_state(x);
        let dq = finite_diff_jacobian(
            |qp| {
                let qp = Config::from_column_slice(qp.as_slice());
                DVector::from_column_slice((self.model.centroidal_momentum_matrix(&qp) * v).as_slice())
            },
            &DVector::from_column_slice(q.as_slice()),
            DEFAULT_STEP,
        )?;
        let mut jx = DMatrix::zeros(3, STATE_DIM);
        jx.view_mut((0, 0), (3, 6)).copy_from(&dq);
        jx.view_mut((0, 6), (3, 6))
            .copy_from(&self.model.centroidal_momentum_matrix(&q));
        Ok((jx, DMatrix::zeros(3, u.len())))
    }
}

/// Contact-force map `g_λ(q, q̇, u)`, shared by the force-consensus and
/// friction-cone constraints.
pub struct ForceMap {
    pub dynamics: WalkerDynamics,
}

impl CouplingMap for ForceMap {
    fn dim(&self) -> usize {
        2
    }
    fn support(&self) -> Support {
        Support::StateControl
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (q, v) = split_state(x);
        match self.dynamics.model.contact_solve(&q, &v, &control3(u)) {
            Ok(sol) => DVector::from_column_slice(sol.force.as_slice()),
            Err(_) => DVector::from_element(2, f64::NAN),
        }
    }
}

/// `x ↦ M x` on centroidal states.
pub struct LinearStateMap {
    pub matrix: DMatrix<f64>,
}

impl CouplingMap for LinearStateMap {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn support(&self) -> Support {
        Support::State
    }
    fn eval(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }
    fn jacobians(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((self.matrix.clone(), DMatrix::zeros(self.dim(), u.len())))
    }
}

/// Limits handled by the projection block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerLimits {
    pub knee_min: f64,
    pub knee_max: f64,
    pub torque: f64,
    pub friction: f64,
}

impl Default for WalkerLimits {
    fn default() -> Self {
        Self {
            knee_min: 0.0,
            knee_max: std::f64::consts::PI,
            torque: 40.0,
            friction: 1.0,
        }
    }
}

impl WalkerLimits {
    pub fn sets(&self) -> AdmissibleSets {
        let mut sets = AdmissibleSets::unbounded(STATE_DIM, CONTROL_DIM);
        for knee in [4, 5] {
            sets.state_lower[knee] = self.knee_min;
            sets.state_upper[knee] = self.knee_max;
        }
        sets.control_lower = DVector::from_element(CONTROL_DIM, -self.torque);
        sets.control_upper = DVector::from_element(CONTROL_DIM, self.torque);
        sets.friction_coefficient = Some(self.friction);
        sets
    }
}

/// All six coupling constraints between the whole-body, centroidal and
/// projection blocks of one walking step.
pub struct WalkerSplit {
    pub wholebody: WholeBodyProblem,
    pub centroidal: CentroidalProblem,
    com: ComMap,
    momentum: MomentumMap,
    force: ForceMap,
    state_box: IdentityMap,
    control_box: IdentityMap,
    centroidal_com: LinearStateMap,
    centroidal_momentum: LinearStateMap,
    centroidal_force: IdentityMap,
    sets: AdmissibleSets,
}

impl WalkerSplit {
    pub fn new(wholebody: WholeBodyProblem, centroidal: CentroidalProblem, limits: &WalkerLimits) -> Self {
        let model = wholebody.dynamics.model.clone();
        let mut com = DMatrix::zeros(2, centroidal::STATE_DIM);
        com[(0, 0)] = 1.0;
        com[(1, 1)] = 1.0;
        let mut momentum = DMatrix::zeros(3, centroidal::STATE_DIM);
        momentum[(0, 3)] = centroidal.dynamics.mass;
        momentum[(1, 4)] = centroidal.dynamics.mass;
        momentum[(2, 5)] = centroidal.dynamics.inertia;
        Self {
            com: ComMap { model: model.clone() },
            momentum: MomentumMap { model },
            force: ForceMap {
                dynamics: wholebody.dynamics.clone(),
            },
            state_box: IdentityMap {
                support: Support::State,
                dim: STATE_DIM,
            },
            control_box: IdentityMap {
                support: Support::StateControl,
                dim: CONTROL_DIM,
            },
            centroidal_com: LinearStateMap { matrix: com },
            centroidal_momentum: LinearStateMap { matrix: momentum },
            centroidal_force: IdentityMap {
                support: Support::StateControl,
                dim: centroidal::CONTROL_DIM,
            },
            sets: limits.sets(),
            wholebody,
            centroidal,
        }
    }

    pub fn centroidal_dynamics(&self) -> &CentroidalDynamics {
        &self.centroidal.dynamics
    }
}

impl SplitModel for WalkerSplit {
    fn wholebody(&self) -> &dyn DdpProblem {
        &self.wholebody
    }
    fn centroidal(&self) -> Option<&dyn DdpProblem> {
        Some(&self.centroidal)
    }
    fn wholebody_map(&self, id: ConstraintId) -> Option<&dyn CouplingMap> {
        Some(match id {
            ConstraintId::Com => &self.com,
            ConstraintId::Momentum => &self.momentum,
            ConstraintId::ContactForce | ConstraintId::FrictionCone => &self.force,
            ConstraintId::StateBox => &self.state_box,
            ConstraintId::ControlBox => &self.control_box,
        })
    }
    fn centroidal_map(&self, id: ConstraintId) -> Option<&dyn CouplingMap> {
        match id {
            ConstraintId::Com => Some(&self.centroidal_com),
            ConstraintId::Momentum => Some(&self.centroidal_momentum),
            ConstraintId::ContactForce => Some(&self.centroidal_force),
            _ => None,
        }
    }
    fn sets(&self) -> &AdmissibleSets {
        &self.sets
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::{AugmentedProblem, PenaltyTerm};
    use crate::ddp::trajectory_cost;
    use crate::models::walker::gait::{build_step, initial_state, warm_start, StepSetup, WalkerScenario};
    use crate::numdiff::finite_diff_gradient;
    use crate::trajectory::{rollout, Trajectory};

    fn first_step() -> (WalkerSplit, Trajectory) {
        let scenario = WalkerScenario {
            warm_start_iterations: 0,
            ..WalkerScenario::default()
        };
        let model = WalkerModel::new(scenario.params.clone()).unwrap();
        let plan = scenario.plan();
        let x0 = initial_state(&model, &scenario).unwrap();
        let setup = StepSetup {
            stance_foot: plan.footholds[1],
            swing_start: plan.footholds[0],
            swing_target: plan.footholds[2],
            initial_state: x0.clone(),
        };
        let split = build_step(&model, &scenario, &setup).unwrap();
        let ws = warm_start(&split, &scenario, &x0).unwrap();
        (split, ws.wholebody)
    }

    fn relative_gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-12)
    }

    #[test]
    fn cost_vanishes_on_its_own_reference() {
        let (mut split, traj) = first_step();
        let wbd = &mut split.wholebody;
        let model = wbd.dynamics.model.clone();
        wbd.swing_reference = traj
            .states()
            .iter()
            .map(|x| model.swing_foot.position(&split_state(x).0))
            .collect();
        let (q, v) = split_state(traj.final_state());
        wbd.terminal_posture = q;
        wbd.terminal_velocity = v;
        let idle = Trajectory::new(
            traj.states().to_vec(),
            vec![DVector::zeros(3); traj.controls().len()],
            traj.dt(),
        )
        .unwrap();
        assert!(trajectory_cost(&*wbd, &idle) < 1e-20);
    }

    #[test]
    fn cost_is_linear_in_the_weights() {
        let (mut split, traj) = first_step();
        let base = trajectory_cost(&split.wholebody, &traj);
        split.wholebody.weights = split.wholebody.weights.scaled(3.0);
        assert!((trajectory_cost(&split.wholebody, &traj) - 3.0 * base).abs() <= 1e-12 * base);
    }

    #[test]
    fn cost_gradients_match_finite_differences() {
        let (split, traj) = first_step();
        let wbd = &split.wholebody;
        let k = 17;
        let (x, u) = (&traj.states()[k], &traj.controls()[k]);
        let d = wbd.stage_derivatives(x, u, k);
        let gx = finite_diff_gradient(|xp| wbd.stage_cost(xp, u, k), x, 1e-6).unwrap();
        let gu = finite_diff_gradient(|up| wbd.stage_cost(x, up, k), u, 1e-6).unwrap();
        assert!(relative_gap(&d.lx, &gx) < 1e-6);
        assert!(relative_gap(&d.lu, &gu) < 1e-6);
        let xf = traj.final_state();
        let t = wbd.terminal_derivatives(xf);
        let gt = finite_diff_gradient(|xp| wbd.terminal_cost(xp), xf, 1e-6).unwrap();
        assert!(relative_gap(&t.lx, &gt) < 1e-6);
    }

    #[test]
    fn map_jacobians_match_finite_differences() {
        let (split, traj) = first_step();
        let (x, u) = (&traj.states()[20], &traj.controls()[20]);
        for id in ConstraintId::ALL {
            let map = split.wholebody_map(id).unwrap();
            let (jx, ju) = map.jacobians(x, u).unwrap();
            let fx = finite_diff_jacobian(|xp| map.eval(xp, u), x, DEFAULT_STEP).unwrap();
            let fu = finite_diff_jacobian(|up| map.eval(x, up), u, DEFAULT_STEP).unwrap();
            assert!((&jx - &fx).norm() <= 1e-5 * fx.norm().max(1.0), "{id:?} state Jacobian");
            assert!(
                (&ju - &fu).norm() <= 1e-5 * fu.norm().max(1.0),
                "{id:?} control Jacobian"
            );
        }
    }

    #[test]
    fn models_agree_at_the_initial_state() {
        let (split, traj) = first_step();
        let model = &split.wholebody.dynamics.model;
        let cen = split.centroidal_dynamics();
        let x0 = traj.initial_state();
        let z0 = crate::models::walker::gait::centroidal_state(model, cen.inertia, x0, 0.0);
        let empty = DVector::zeros(0);
        for id in [ConstraintId::Com, ConstraintId::Momentum] {
            let w = split.wholebody_map(id).unwrap().eval(x0, &traj.controls()[0]);
            let c = split.centroidal_map(id).unwrap().eval(&z0, &empty);
            assert!((&w - &c).norm() < 1e-12, "{id:?}");
        }
    }

    #[test]
    fn penalties_vanish_at_consensus_and_scale_with_rho() {
        let (split, traj) = first_step();
        let maps: Vec<&dyn CouplingMap> = [ConstraintId::Com, ConstraintId::Momentum, ConstraintId::ContactForce]
            .into_iter()
            .map(|id| split.wholebody_map(id).unwrap())
            .collect();
        let at_consensus: Vec<PenaltyTerm> = maps
            .iter()
            .map(|&map| PenaltyTerm {
                map,
                rho: 1e4,
                targets: map.eval_along(&traj),
            })
            .collect();
        let aug = AugmentedProblem::new(&split.wholebody, traj.horizon(), at_consensus);
        assert_eq!(aug.penalty_cost(&traj), 0.0);

        let com = maps[0];
        let shifted: Vec<_> = com.eval_along(&traj).into_iter().map(|c| c.add_scalar(0.01)).collect();
        let penalty = |rho| {
            AugmentedProblem::new(
                &split.wholebody,
                traj.horizon(),
                vec![PenaltyTerm {
                    map: com,
                    rho,
                    targets: shifted.clone(),
                }],
            )
            .penalty_cost(&traj)
        };
        let (single, double) = (penalty(1e4), penalty(2e4));
        assert!(single > 0.0);
        assert!((double - 2.0 * single).abs() <= 1e-12 * double);
    }

    #[test]
    fn augmented_gradient_matches_finite_differences() {
        let (split, traj) = first_step();
        let targets = |id: ConstraintId, shift: f64| -> Vec<DVector<f64>> {
            split
                .wholebody_map(id)
                .unwrap()
                .eval_along(&traj)
                .into_iter()
                .map(|m| m.add_scalar(shift))
                .collect()
        };
        let terms = vec![
            PenaltyTerm {
                map: split.wholebody_map(ConstraintId::Com).unwrap(),
                rho: 1e4,
                targets: targets(ConstraintId::Com, 0.01),
            },
            PenaltyTerm {
                map: split.wholebody_map(ConstraintId::Momentum).unwrap(),
                rho: 1e-2,
                targets: targets(ConstraintId::Momentum, 0.5),
            },
            PenaltyTerm {
                map: split.wholebody_map(ConstraintId::ContactForce).unwrap(),
                rho: 1e-2,
                targets: targets(ConstraintId::ContactForce, 5.0),
            },
            PenaltyTerm {
                map: split.wholebody_map(ConstraintId::FrictionCone).unwrap(),
                rho: 1e-2,
                targets: targets(ConstraintId::FrictionCone, -3.0),
            },
        ];
        let aug = AugmentedProblem::new(&split.wholebody, traj.horizon(), terms);
        let k = 30;
        let (x, u) = (&traj.states()[k], &traj.controls()[k]);
        let d = aug.stage_derivatives(x, u, k);
        let gx = finite_diff_gradient(|xp| aug.stage_cost(xp, u, k), x, 1e-6).unwrap();
        let gu = finite_diff_gradient(|up| aug.stage_cost(x, up, k), u, 1e-6).unwrap();
        assert!(relative_gap(&d.lx, &gx) < 1e-4);
        assert!(relative_gap(&d.lu, &gu) < 1e-4);
    }

    #[test]
    fn rollout_of_warm_start_reproduces_its_states() {
        let (split, traj) = first_step();
        let again = rollout(&split.wholebody.dynamics, traj.initial_state(), traj.controls()).unwrap();
        assert!((again.final_state() - traj.final_state()).norm() < 1e-12);
    }

    #[test]
    fn limits_box_only_the_knees_and_torques() {
        let sets = WalkerLimits::default().sets();
        for i in 0..STATE_DIM {
            let bounded = i == 4 || i == 5;
            assert_eq!(sets.state_lower[i].is_finite(), bounded);
            assert_eq!(sets.state_upper[i].is_finite(), bounded);
        }
        assert_eq!(sets.state_upper[5], std::f64::consts::PI);
        assert!(sets.control_upper.iter().all(|&t| t == 40.0));
        assert_eq!(sets.friction_coefficient, Some(1.0));
    }
}
