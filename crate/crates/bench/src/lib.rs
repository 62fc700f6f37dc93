//! Fixtures shared by the criterion benches.

use admm_trajopt::ddp::{StageDerivatives, TerminalDerivatives};
use admm_trajopt::{AdmissibleSets, DdpProblem, DynamicalSystem, ProjectionVars, Trajectory};
use nalgebra::{DMatrix, DVector, Vector2};

/// `n` decoupled double integrators with a weak coupling term, so the
/// dynamics matrices are dense.
pub struct Chain {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    dt: f64,
}

impl Chain {
    pub fn new(n: usize, dt: f64) -> Self {
        let nx = 2 * n;
        let a = DMatrix::from_fn(nx, nx, |i, j| match (i % 2, j) {
            _ if i == j => 1.0,
            (0, j) if j == i + 1 => dt,
            _ => 1e-3 * ((i * nx + j) as f64).sin(),
        });
        let b = DMatrix::from_fn(nx, n, |i, j| if i == 2 * j + 1 { dt } else { 0.0 });
        Self { a, b, dt }
    }
}

impl DynamicalSystem for Chain {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> admm_trajopt::Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((self.a.clone(), self.b.clone()))
    }
}

/// Quadratic regulation of a [`Chain`] to the origin.
pub struct Regulator {
    pub system: Chain,
}

impl DdpProblem for Regulator {
    fn system(&self) -> &dyn DynamicalSystem {
        &self.system
    }
    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> f64 {
        0.5 * (x.norm_squared() + 0.1 * u.norm_squared())
    }
    fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        50.0 * x.norm_squared()
    }
    fn stage_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> StageDerivatives {
        let (nx, nu) = (x.len(), u.len());
        StageDerivatives {
            lx: x.clone(),
            lu: u * 0.1,
            lxx: DMatrix::identity(nx, nx),
            luu: DMatrix::identity(nu, nu) * 0.1,
            lux: DMatrix::zeros(nu, nx),
        }
    }
    fn terminal_derivatives(&self, x: &DVector<f64>) -> TerminalDerivatives {
        TerminalDerivatives {
            lx: x * 100.0,
            lxx: DMatrix::identity(x.len(), x.len()) * 100.0,
        }
    }
}

/// Regulator over `n` integrators and `steps` states, with a zero-control
/// initial guess from a nonzero start.
pub fn regulator(n: usize, steps: usize) -> (Regulator, Trajectory) {
    let system = Chain::new(n, 0.05);
    let x0 = DVector::from_fn(2 * n, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 });
    let controls = vec![DVector::zeros(n); steps - 1];
    let init = admm_trajopt::rollout(&system, &x0, &controls).expect("linear rollout is finite");
    (Regulator { system }, init)
}

/// Projection inputs with about half the entries outside the bounds and
/// a mix of forces inside and outside the cone.
pub fn projection_case(nx: usize, nu: usize, steps: usize) -> (ProjectionVars, ProjectionVars, AdmissibleSets) {
    let wave = |seed: usize, len: usize| DVector::from_fn(len, |i, _| 2.0 * ((seed * 31 + i * 7) as f64).sin());
    let vars = |offset: usize| ProjectionVars {
        states: (0..steps).map(|k| wave(k + offset, nx)).collect(),
        controls: (0..steps - 1).map(|k| wave(k + offset + 1000, nu)).collect(),
        forces: (0..steps - 1)
            .map(|k| {
                let t = (k + offset) as f64;
                Vector2::new(t.sin(), 1.0 + t.cos())
            })
            .collect(),
    };
    let mut sets = AdmissibleSets::unbounded(nx, nu);
    sets.state_lower.fill(-1.0);
    sets.state_upper.fill(1.0);
    sets.control_lower.fill(-0.5);
    sets.control_upper.fill(0.5);
    sets.friction_coefficient = Some(0.7);
    let mut duals = vars(17);
    for v in duals.states.iter_mut().chain(duals.controls.iter_mut()) {
        *v *= 0.1;
    }
    for f in &mut duals.forces {
        *f *= 0.1;
    }
    (vars(0), duals, sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use admm_trajopt::projection::project_block;
    use admm_trajopt::{ddp, DdpSettings};

    #[test]
    fn regulator_solves() {
        let (problem, init) = regulator(3, 40);
        let sol = ddp::solve(&problem, &init, &DdpSettings::default()).unwrap();
        assert!(sol.total_cost < sol.cost_history[0]);
    }

    #[test]
    fn projection_case_is_consistent() {
        let (p, d, sets) = projection_case(6, 3, 20);
        let out = project_block(&p, &d, &sets).unwrap();
        assert!(out.controls.iter().all(|u| u.amax() <= 0.5));
    }
}
