//! Euclidean projections onto the admissible sets: coordinate boxes for
//! states and controls, and the planar Coulomb friction cone for forces.

use nalgebra::{DVector, Vector2};

use crate::error::{Error, Result};

/// Box bounds for states and controls plus the friction coefficient.
/// Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSets {
    pub state_lower: DVector<f64>,
    pub state_upper: DVector<f64>,
    pub control_lower: DVector<f64>,
    pub control_upper: DVector<f64>,
    /// `None` disables the cone projection.
    pub friction_coefficient: Option<f64>,
}

impl AdmissibleSets {
    pub fn unbounded(state_dim: usize, control_dim: usize) -> Self {
        Self {
            state_lower: DVector::from_element(state_dim, f64::NEG_INFINITY),
            state_upper: DVector::from_element(state_dim, f64::INFINITY),
            control_lower: DVector::from_element(control_dim, f64::NEG_INFINITY),
            control_upper: DVector::from_element(control_dim, f64::INFINITY),
            friction_coefficient: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_bounds("state", &self.state_lower, &self.state_upper)?;
        check_bounds("control", &self.control_lower, &self.control_upper)?;
        if let Some(mu) = self.friction_coefficient {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "friction coefficient must be positive, got {mu}"
                )));
            }
        }
        Ok(())
    }
}

fn check_bounds(kind: &str, lower: &DVector<f64>, upper: &DVector<f64>) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::DimensionMismatch {
            context: "bound vectors",
            expected: lower.len(),
            found: upper.len(),
        });
    }
    for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidInput(format!(
                "{kind} bound {i}: lower {lo} exceeds upper {hi}"
            )));
        }
    }
    Ok(())
}

/// Coordinate-wise clamp of `v` into `[lower, upper]`.
pub fn project_box(v: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    debug_assert_eq!(v.len(), lower.len());
    debug_assert_eq!(v.len(), upper.len());
    v.zip_zip_map(lower, upper, |x, lo, hi| x.max(lo).min(hi))
}

/// Projection of `(fx, fz)` onto `{|fx| ≤ μ fz}`.
pub fn project_friction_cone_2d(f: Vector2<f64>, mu: f64) -> Vector2<f64> {
    let (fx, fz) = (f.x, f.y);
    if fx.abs() <= mu * fz {
        return f;
    }
    let t = (mu * fx.abs() + fz) / (1.0 + mu * mu);
    // t ≤ 0 exactly on the polar cone {fz ≤ -μ|fx|}.
    if t <= 0.0 {
        return Vector2::zeros();
    }
    Vector2::new(fx.signum() * mu * t, t)
}

/// Primal values `(s, u, g_λ)` or their projected copies `(s̄, ū, λ̄)`,
/// one entry per time step.
///
/// `forces` is empty when no cone constraint is active.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionVars {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub forces: Vec<Vector2<f64>>,
}

impl ProjectionVars {
    fn check_same_shape(&self, other: &Self) -> Result<()> {
        let pairs = [
            ("states", self.states.len(), other.states.len()),
            ("controls", self.controls.len(), other.controls.len()),
            ("forces", self.forces.len(), other.forces.len()),
        ];
        for (context, expected, found) in pairs {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    found,
                });
            }
        }
        for (a, b) in self.states.iter().zip(&other.states) {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    context: "state",
                    expected: a.len(),
                    found: b.len(),
                });
            }
        }
        for (a, b) in self.controls.iter().zip(&other.controls) {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    context: "control",
                    expected: a.len(),
                    found: b.len(),
                });
            }
        }
        Ok(())
    }

    /// `α·self + (1 − α)·other`, element-wise.
    pub fn blend(&self, other: &Self, alpha: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let mix = |a: &DVector<f64>, b: &DVector<f64>| a * alpha + b * (1.0 - alpha);
        Ok(Self {
            states: self.states.iter().zip(&other.states).map(|(a, b)| mix(a, b)).collect(),
            controls: self
                .controls
                .iter()
                .zip(&other.controls)
                .map(|(a, b)| mix(a, b))
                .collect(),
            forces: self
                .forces
                .iter()
                .zip(&other.forces)
                .map(|(a, b)| a * alpha + b * (1.0 - alpha))
                .collect(),
        })
    }
}

/// Scaled duals `(w_j, w_t, w_f)` of the projection constraints.
pub type ProjectionDuals = ProjectionVars;

/// Exact minimizer of the projection sub-problem: each copy is the projection
/// of its primal value plus scaled dual. The penalties do not enter because
/// each copy appears in exactly one separable squared distance.
pub fn project_block(
    primal: &ProjectionVars,
    duals: &ProjectionDuals,
    sets: &AdmissibleSets,
) -> Result<ProjectionVars> {
    primal.check_same_shape(duals)?;
    let nx = sets.state_lower.len();
    let nu = sets.control_lower.len();
    if let Some(s) = primal.states.iter().find(|s| s.len() != nx) {
        return Err(Error::DimensionMismatch {
            context: "projected state",
            expected: nx,
            found: s.len(),
        });
    }
    if let Some(u) = primal.controls.iter().find(|u| u.len() != nu) {
        return Err(Error::DimensionMismatch {
            context: "projected control",
            expected: nu,
            found: u.len(),
        });
    }
    let forces = match sets.friction_coefficient {
        Some(mu) => primal
            .forces
            .iter()
            .zip(&duals.forces)
            .map(|(g, w)| project_friction_cone_2d(g + w, mu))
            .collect(),
        None if primal.forces.is_empty() => Vec::new(),
        None => {
            return Err(Error::InvalidInput(
                "forces given but no friction coefficient configured".into(),
            ))
        }
    };
    Ok(ProjectionVars {
        states: primal
            .states
            .iter()
            .zip(&duals.states)
            .map(|(s, w)| project_box(&(s + w), &sets.state_lower, &sets.state_upper))
            .collect(),
        controls: primal
            .controls
            .iter()
            .zip(&duals.controls)
            .map(|(u, w)| project_box(&(u + w), &sets.control_lower, &sets.control_upper))
            .collect(),
        forces,
    })
}
