//! Trajectories, the discrete-time system interface and forward rollouts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numdiff::{finite_diff_jacobian, DEFAULT_STEP};

/// A time-indexed sequence of `T` states and `T - 1` controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<DVector<f64>>,
    controls: Vec<DVector<f64>>,
    dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>, dt: f64) -> Result<Self> {
        if states.len() != controls.len() + 1 {
            return Err(Error::DimensionMismatch {
                context: "trajectory length",
                expected: controls.len() + 1,
                found: states.len(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let nx = states[0].len();
        if let Some(bad) = states.iter().find(|s| s.len() != nx) {
            return Err(Error::DimensionMismatch {
                context: "trajectory state",
                expected: nx,
                found: bad.len(),
            });
        }
        if let Some(first) = controls.first() {
            let nu = first.len();
            if let Some(bad) = controls.iter().find(|u| u.len() != nu) {
                return Err(Error::DimensionMismatch {
                    context: "trajectory control",
                    expected: nu,
                    found: bad.len(),
                });
            }
        }
        Ok(Self { states, controls, dt })
    }

    /// Number of states `T`.
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn controls(&self) -> &[DVector<f64>] {
        &self.controls
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn control_dim(&self) -> usize {
        self.controls.first().map_or(0, |u| u.len())
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn into_parts(self) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, f64) {
        (self.states, self.controls, self.dt)
    }
}

/// A deterministic discrete-time transition `x_{k+1} = step(x_k, u_k)`.
pub trait DynamicalSystem: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn dt(&self) -> f64;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Jacobians `(∂step/∂x, ∂step/∂u)`; central differences unless overridden.
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let fx = finite_diff_jacobian(|xp| self.step(xp, u), x, DEFAULT_STEP)?;
        let fu = finite_diff_jacobian(|up| self.step(x, up), u, DEFAULT_STEP)?;
        Ok((fx, fu))
    }
}

/// Simulates `system` from `x0` under `controls`.
pub fn rollout<S: DynamicalSystem + ?Sized>(
    system: &S,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
) -> Result<Trajectory> {
    if controls.is_empty() {
        return Err(Error::InvalidInput("rollout needs at least one control".into()));
    }
    if x0.len() != system.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "rollout initial state",
            expected: system.state_dim(),
            found: x0.len(),
        });
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.clone());
    for u in controls {
        if u.len() != system.control_dim() {
            return Err(Error::DimensionMismatch {
                context: "rollout control",
                expected: system.control_dim(),
                found: u.len(),
            });
        }
        let next = system.step(states.last().unwrap(), u);
        states.push(next);
    }
    Trajectory::new(states, controls.to_vec(), system.dt())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    /// Explicit-Euler double integrator `ẋ = v, v̇ = u`.
    pub(crate) struct DoubleIntegrator {
        pub dt: f64,
    }

    impl DynamicalSystem for DoubleIntegrator {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn dt(&self) -> f64 {
            self.dt
        }
        fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            dvector![x[0] + self.dt * x[1], x[1] + self.dt * u[0]]
        }
    }

    #[test]
    fn zero_input_is_fixed_point() {
        let sys = DoubleIntegrator { dt: 0.1 };
        let traj = rollout(&sys, &dvector![0.0, 0.0], &vec![dvector![0.0]; 3]).unwrap();
        assert_eq!(traj.horizon(), 4);
        assert!(traj.states().iter().all(|s| s.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn one_euler_step() {
        let sys = DoubleIntegrator { dt: 0.1 };
        let traj = rollout(&sys, &dvector![0.0, 0.0], &[dvector![1.0]]).unwrap();
        assert_eq!(traj.states()[1], dvector![0.0, 0.1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = DoubleIntegrator { dt: 0.1 };
        assert!(rollout(&sys, &dvector![0.0], &[dvector![1.0]]).is_err());
        assert!(rollout(&sys, &dvector![0.0, 0.0], &[]).is_err());
        assert!(rollout(&sys, &dvector![0.0, 0.0], &[dvector![1.0, 2.0]]).is_err());
        assert!(Trajectory::new(vec![dvector![0.0]], vec![dvector![0.0]], 0.1).is_err());
        assert!(Trajectory::new(vec![dvector![0.0]], vec![], -1.0).is_err());
    }

    proptest! {
        #[test]
        fn rollout_length_contract(
            x0 in proptest::collection::vec(-10.0..10.0f64, 2),
            us in proptest::collection::vec(-5.0..5.0f64, 1..40),
        ) {
            let sys = DoubleIntegrator { dt: 0.05 };
            let controls: Vec<_> = us.iter().map(|u| dvector![*u]).collect();
            let x0 = DVector::from_vec(x0);
            let traj = rollout(&sys, &x0, &controls).unwrap();
            prop_assert_eq!(traj.states().len(), controls.len() + 1);
            prop_assert_eq!(&traj.states()[0], &x0);
            for (k, u) in controls.iter().enumerate() {
                prop_assert_eq!(&traj.states()[k + 1], &sys.step(&traj.states()[k], u));
            }
        }

        // The f64 rounding floor of a 1e-5 central difference is about
        // ulp(|A x|) / 2e-5, so |A x| must stay below a few hundred for 1e-8.
        #[test]
        fn linear_map_jacobian_is_exact(
            entries in proptest::collection::vec(-1e3..1e3f64, 12),
            x in proptest::collection::vec(-0.1..0.1f64, 4),
        ) {
            let a = DMatrix::from_row_slice(3, 4, &entries);
            let x = DVector::from_vec(x);
            let jac = finite_diff_jacobian(|v| &a * v, &x, 1e-5).unwrap();
            prop_assert!((jac - &a).abs().max() <= 1e-8);
        }
    }
}
