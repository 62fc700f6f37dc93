use nalgebra::{DMatrix, DVector};

use crate::ddp::{DdpProblem, StageDerivatives, TerminalDerivatives};
use crate::error::Result;
use crate::numdiff::{finite_diff_jacobian, DEFAULT_STEP};
use crate::trajectory::{DynamicalSystem, Trajectory};

/// Which part of a trajectory a coupling map reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// `m(x_k)` at every state index `0..T`.
    State,
    /// `m(x_k, u_k)` at every control index `0..T-1`.
    StateControl,
}

/// A block's side of a coupling constraint.
pub trait CouplingMap: Sync {
    fn dim(&self) -> usize;
    fn support(&self) -> Support;
    /// `u` is ignored (and may be empty) for [`Support::State`] maps.
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `(∂m/∂x, ∂m/∂u)`; `∂m/∂u` is zero for state maps.
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let jx = finite_diff_jacobian(|xp| self.eval(xp, u), x, DEFAULT_STEP)?;
        let ju = match self.support() {
            Support::State => DMatrix::zeros(self.dim(), u.len()),
            Support::StateControl => finite_diff_jacobian(|up| self.eval(x, up), u, DEFAULT_STEP)?,
        };
        Ok((jx, ju))
    }

    /// Map values along `traj`, one per state or control index.
    fn eval_along(&self, traj: &Trajectory) -> Vec<DVector<f64>> {
        let states = traj.states();
        match self.support() {
            Support::State => {
                let empty = DVector::zeros(0);
                states.iter().map(|x| self.eval(x, &empty)).collect()
            }
            Support::StateControl => traj
                .controls()
                .iter()
                .enumerate()
                .map(|(k, u)| self.eval(&states[k], u))
                .collect(),
        }
    }
}

/// `m(x) = x` or `m(x, u) = u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityMap {
    pub support: Support,
    pub dim: usize,
}

impl CouplingMap for IdentityMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn support(&self) -> Support {
        self.support
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self.support {
            Support::State => x.clone(),
            Support::StateControl => u.clone(),
        }
    }
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok(match self.support {
            Support::State => (DMatrix::identity(self.dim, x.len()), DMatrix::zeros(self.dim, u.len())),
            Support::StateControl => (DMatrix::zeros(self.dim, x.len()), DMatrix::identity(self.dim, u.len())),
        })
    }
}

/// `ρ/2 ‖m(x_k, u_k) − target_k‖²` summed over the map's support.
pub struct PenaltyTerm<'a> {
    pub map: &'a dyn CouplingMap,
    pub rho: f64,
    pub targets: Vec<DVector<f64>>,
}

/// Terms reading the same map object share one evaluation and one Jacobian.
struct Group<'a> {
    map: &'a dyn CouplingMap,
    terms: Vec<(f64, Vec<DVector<f64>>)>,
}

impl Group<'_> {
    fn cost_at(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        let m = self.map.eval(x, u);
        self.terms
            .iter()
            .map(|(rho, t)| 0.5 * rho * (&m - &t[k]).norm_squared())
            .sum()
    }

    /// `(Σρ, Σρ(m − t))`.
    fn weighted_residual(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> (f64, DVector<f64>) {
        let m = self.map.eval(x, u);
        let mut g = DVector::zeros(m.len());
        let mut total = 0.0;
        for (rho, t) in &self.terms {
            g += (&m - &t[k]) * *rho;
            total += rho;
        }
        (total, g)
    }
}

/// A base problem plus quadratic penalty terms on coupling maps, with
/// Gauss-Newton derivatives `ρJᵀ(m − t)` and `ρJᵀJ`.
///
/// State-supported terms enter the stage cost at `k < T-1` and the terminal
/// cost at `T-1`.
pub struct AugmentedProblem<'a> {
    base: &'a dyn DdpProblem,
    groups: Vec<Group<'a>>,
    horizon: usize,
}

impl<'a> AugmentedProblem<'a> {
    /// `horizon` is the number of states `T`.
    pub fn new(base: &'a dyn DdpProblem, horizon: usize, terms: Vec<PenaltyTerm<'a>>) -> Self {
        let mut groups: Vec<Group<'a>> = Vec::new();
        for term in terms {
            debug_assert_eq!(
                term.targets.len(),
                match term.map.support() {
                    Support::State => horizon,
                    Support::StateControl => horizon - 1,
                }
            );
            // Fat-pointer equality: same object and same implementation.
            match groups.iter_mut().find(|g| std::ptr::eq(g.map, term.map)) {
                Some(g) => g.terms.push((term.rho, term.targets)),
                None => groups.push(Group {
                    map: term.map,
                    terms: vec![(term.rho, term.targets)],
                }),
            }
        }
        Self { base, groups, horizon }
    }

    pub fn base(&self) -> &dyn DdpProblem {
        self.base
    }

    /// Penalty part of the cost along `traj`.
    pub fn penalty_cost(&self, traj: &Trajectory) -> f64 {
        let states = traj.states();
        let empty = DVector::zeros(0);
        let mut total = 0.0;
        for g in &self.groups {
            match g.map.support() {
                Support::State => {
                    for (k, x) in states.iter().enumerate() {
                        total += g.cost_at(x, &empty, k);
                    }
                }
                Support::StateControl => {
                    for (k, u) in traj.controls().iter().enumerate() {
                        total += g.cost_at(&states[k], u, k);
                    }
                }
            }
        }
        total
    }

    fn jacobians(&self, map: &dyn CouplingMap, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        // Coupling maps are smooth on the region the solver visits; a
        // non-finite difference there means the base dynamics already failed.
        map.jacobians(x, u)
            .unwrap_or_else(|_| (DMatrix::zeros(map.dim(), x.len()), DMatrix::zeros(map.dim(), u.len())))
    }
}

impl DdpProblem for AugmentedProblem<'_> {
    fn system(&self) -> &dyn DynamicalSystem {
        self.base.system()
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        self.base.stage_cost(x, u, k) + self.groups.iter().map(|g| g.cost_at(x, u, k)).sum::<f64>()
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        let empty = DVector::zeros(0);
        self.base.terminal_cost(x)
            + self
                .groups
                .iter()
                .filter(|g| g.map.support() == Support::State)
                .map(|g| g.cost_at(x, &empty, self.horizon - 1))
                .sum::<f64>()
    }

    fn stage_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> StageDerivatives {
        let mut d = self.base.stage_derivatives(x, u, k);
        for g in &self.groups {
            let (rho, res) = g.weighted_residual(x, u, k);
            let (jx, ju) = self.jacobians(g.map, x, u);
            d.lx += jx.transpose() * &res;
            d.lxx += jx.transpose() * &jx * rho;
            if g.map.support() == Support::StateControl {
                d.lu += ju.transpose() * &res;
                d.luu += ju.transpose() * &ju * rho;
                d.lux += ju.transpose() * &jx * rho;
            }
        }
        d
    }

    fn terminal_derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        let mut d = self.base.terminal_derivatives(x);
        let empty = DVector::zeros(0);
        for g in self.groups.iter().filter(|g| g.map.support() == Support::State) {
            let (rho, res) = g.weighted_residual(x, &empty, self.horizon - 1);
            let (jx, _) = self.jacobians(g.map, x, &empty);
            d.lx += jx.transpose() * &res;
            d.lxx += jx.transpose() * &jx * rho;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddp::tests::{LinearSystem, Lqr};
    use crate::numdiff::finite_diff_gradient;
    use crate::trajectory::rollout;
    use nalgebra::dvector;

    /// `m(x) = (x0², x0 x1)`.
    struct Quadratic;
    impl CouplingMap for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn support(&self) -> Support {
            Support::State
        }
        fn eval(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
            dvector![x[0] * x[0], x[0] * x[1]]
        }
    }

    /// `m(x, u) = u + sin(x0)`; the field keeps instances at distinct addresses.
    struct Mixed(#[allow(dead_code)] u8);
    impl CouplingMap for Mixed {
        fn dim(&self) -> usize {
            1
        }
        fn support(&self) -> Support {
            Support::StateControl
        }
        fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            dvector![u[0] + x[0].sin()]
        }
    }

    fn base() -> Lqr {
        Lqr {
            sys: LinearSystem {
                a: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
                b: DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
            },
            q: DMatrix::identity(2, 2),
            r: DMatrix::identity(1, 1),
            qf: DMatrix::identity(2, 2),
        }
    }

    #[test]
    fn consistent_targets_add_no_cost() {
        let lqr = base();
        let traj = rollout(&lqr.sys, &dvector![1.0, 0.5], &vec![dvector![0.2]; 5]).unwrap();
        let q = Quadratic;
        let terms = vec![PenaltyTerm {
            map: &q,
            rho: 1e4,
            targets: q.eval_along(&traj),
        }];
        let aug = AugmentedProblem::new(&lqr, traj.horizon(), terms);
        assert_eq!(aug.penalty_cost(&traj), 0.0);
        let total = crate::ddp::trajectory_cost(&aug, &traj);
        assert!((total - crate::ddp::trajectory_cost(&lqr, &traj)).abs() < 1e-12);
    }

    #[test]
    fn penalty_is_linear_in_rho() {
        let lqr = base();
        let traj = rollout(&lqr.sys, &dvector![1.0, 0.5], &vec![dvector![0.2]; 5]).unwrap();
        let targets = vec![dvector![0.3, -0.1]; traj.horizon()];
        let q = Quadratic;
        let cost = |rho| {
            AugmentedProblem::new(
                &lqr,
                traj.horizon(),
                vec![PenaltyTerm {
                    map: &q,
                    rho,
                    targets: targets.clone(),
                }],
            )
            .penalty_cost(&traj)
        };
        assert!((cost(20.0) - 2.0 * cost(10.0)).abs() < 1e-12 * cost(20.0));
    }

    #[test]
    fn shared_map_matches_separate_terms() {
        let lqr = base();
        let m = Mixed(0);
        let x = dvector![0.4, -0.2];
        let u = dvector![0.7];
        let t1 = vec![dvector![0.1]; 3];
        let t2 = vec![dvector![-0.5]; 3];
        let shared = AugmentedProblem::new(
            &lqr,
            4,
            vec![
                PenaltyTerm {
                    map: &m,
                    rho: 2.0,
                    targets: t1.clone(),
                },
                PenaltyTerm {
                    map: &m,
                    rho: 3.0,
                    targets: t2.clone(),
                },
            ],
        );
        let m2 = Mixed(1);
        let separate = AugmentedProblem::new(
            &lqr,
            4,
            vec![
                PenaltyTerm {
                    map: &m,
                    rho: 2.0,
                    targets: t1,
                },
                PenaltyTerm {
                    map: &m2,
                    rho: 3.0,
                    targets: t2,
                },
            ],
        );
        assert_eq!(shared.groups.len(), 1);
        assert_eq!(separate.groups.len(), 2);
        let a = shared.stage_derivatives(&x, &u, 1);
        let b = separate.stage_derivatives(&x, &u, 1);
        assert!((a.lx - b.lx).norm() < 1e-12);
        assert!((a.luu - b.luu).norm() < 1e-12);
        assert!((shared.stage_cost(&x, &u, 1) - separate.stage_cost(&x, &u, 1)).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let lqr = base();
        let m = Mixed(0);
        let q = Quadratic;
        let aug = AugmentedProblem::new(
            &lqr,
            4,
            vec![
                PenaltyTerm {
                    map: &m,
                    rho: 5.0,
                    targets: vec![dvector![0.3]; 3],
                },
                PenaltyTerm {
                    map: &q,
                    rho: 7.0,
                    targets: vec![dvector![0.1, 0.2]; 4],
                },
            ],
        );
        let x = dvector![0.4, -0.2];
        let u = dvector![0.7];
        let d = aug.stage_derivatives(&x, &u, 2);
        let gu = finite_diff_gradient(|up| aug.stage_cost(&x, up, 2), &u, 1e-6).unwrap();
        let gx = finite_diff_gradient(|xp| aug.stage_cost(xp, &u, 2), &x, 1e-6).unwrap();
        assert!((&d.lu - &gu).norm() <= 1e-4 * gu.norm());
        assert!((&d.lx - &gx).norm() <= 1e-4 * gx.norm());
        let td = aug.terminal_derivatives(&x);
        let gt = finite_diff_gradient(|xp| aug.terminal_cost(xp), &x, 1e-6).unwrap();
        assert!((&td.lx - &gt).norm() <= 1e-4 * gt.norm());
    }
}
