//! Planar kinematics and rigid-body terms of the kneed compass-gait walker.
//!
//! Generalized coordinates `q = (x, z, pitch, hip, knee_st, knee_sw)`: the
//! base point is the hip, `pitch` is the absolute angle of the stance thigh
//! and the joint angles are relative. A segment with absolute angle `a`
//! points along `d(a) = (sin a, −cos a)`, so `a = 0` hangs straight down and
//! positive angles rotate counter-clockwise. Knees flex with the shank angle
//! `thigh − knee`, so `knee ∈ [0, π]` bends the knee forward.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Config = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Jac2 = SMatrix<f64, 2, 6>;

/// Index of the first actuated coordinate; `q[3..6]` are actuated.
pub const ACTUATED_OFFSET: usize = 3;

pub const STANCE_THIGH: [f64; 6] = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
pub const STANCE_SHANK: [f64; 6] = [0.0, 0.0, 1.0, 0.0, -1.0, 0.0];
pub const SWING_THIGH: [f64; 6] = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
pub const SWING_SHANK: [f64; 6] = [0.0, 0.0, 1.0, 1.0, 0.0, -1.0];

/// Segment direction `d(a)`.
pub fn direction(a: f64) -> Vector2<f64> {
    Vector2::new(a.sin(), -a.cos())
}

/// `d'(a)`.
fn direction_d(a: f64) -> Vector2<f64> {
    Vector2::new(a.cos(), a.sin())
}

/// Planar cross product `a × b = a_x b_z − a_z b_x`.
pub fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn angle(coeffs: &[f64; 6], q: &Config) -> f64 {
    coeffs.iter().zip(q.iter()).map(|(c, v)| c * v).sum()
}

/// A point reached from the hip through straight segments, each with a length
/// and an absolute angle linear in `q`.
#[derive(Debug, Clone, Copy)]
pub struct ChainPoint {
    segments: [(f64, [f64; 6]); 2],
    count: usize,
}

impl ChainPoint {
    fn one(l: f64, c: [f64; 6]) -> Self {
        Self {
            segments: [(l, c), (0.0, [0.0; 6])],
            count: 1,
        }
    }

    fn two(l1: f64, c1: [f64; 6], l2: f64, c2: [f64; 6]) -> Self {
        Self {
            segments: [(l1, c1), (l2, c2)],
            count: 2,
        }
    }

    fn segments(&self) -> &[(f64, [f64; 6])] {
        &self.segments[..self.count]
    }

    /// Offset from the hip.
    pub fn relative(&self, q: &Config) -> Vector2<f64> {
        self.segments().iter().map(|(l, c)| direction(angle(c, q)) * *l).sum()
    }

    pub fn position(&self, q: &Config) -> Vector2<f64> {
        Vector2::new(q[0], q[1]) + self.relative(q)
    }

    /// `∂p/∂q`; the base columns are the identity.
    pub fn jacobian(&self, q: &Config) -> Jac2 {
        let mut j = Jac2::zeros();
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        for (l, c) in self.segments() {
            let dd = direction_d(angle(c, q)) * *l;
            for (col, ci) in c.iter().enumerate() {
                if *ci != 0.0 {
                    j[(0, col)] += dd.x * ci;
                    j[(1, col)] += dd.y * ci;
                }
            }
        }
        j
    }

    /// `J̇ q̇`, the velocity-product acceleration.
    pub fn bias_acceleration(&self, q: &Config, v: &Config) -> Vector2<f64> {
        self.segments()
            .iter()
            .map(|(l, c)| {
                let rate = angle(c, v);
                -direction(angle(c, q)) * (*l * rate * rate)
            })
            .sum()
    }
}

/// Leg and mass parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerParams {
    pub thigh_length: f64,
    pub shank_length: f64,
    pub thigh_mass: f64,
    pub shank_mass: f64,
    pub gravity: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        Self {
            thigh_length: 0.5,
            shank_length: 0.5,
            thigh_mass: 3.0,
            shank_mass: 2.0,
            gravity: 9.81,
        }
    }
}

impl WalkerParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("thigh_length", self.thigh_length),
            ("shank_length", self.shank_length),
            ("thigh_mass", self.thigh_mass),
            ("shank_mass", self.shank_mass),
            ("gravity", self.gravity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("walker {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn leg_length(&self) -> f64 {
        self.thigh_length + self.shank_length
    }
}

/// One of the four links.
#[derive(Debug, Clone, Copy)]
pub struct Link {
    pub mass: f64,
    /// Rotational inertia about the link's own centre (uniform rod).
    pub inertia: f64,
    pub com: ChainPoint,
    pub angle: [f64; 6],
}

/// Rigid-body model of the walker in the stance-relative coordinates.
#[derive(Debug, Clone)]
pub struct WalkerModel {
    pub params: WalkerParams,
    pub links: [Link; 4],
    pub stance_foot: ChainPoint,
    pub swing_foot: ChainPoint,
    pub stance_knee: ChainPoint,
    pub swing_knee: ChainPoint,
}

impl WalkerModel {
    pub fn new(params: WalkerParams) -> Result<Self> {
        params.validate()?;
        let (lt, ls) = (params.thigh_length, params.shank_length);
        let (mt, ms) = (params.thigh_mass, params.shank_mass);
        let rod = |m: f64, l: f64| m * l * l / 12.0;
        let links = [
            Link {
                mass: mt,
                inertia: rod(mt, lt),
                com: ChainPoint::one(lt / 2.0, STANCE_THIGH),
                angle: STANCE_THIGH,
            },
            Link {
                mass: ms,
                inertia: rod(ms, ls),
                com: ChainPoint::two(lt, STANCE_THIGH, ls / 2.0, STANCE_SHANK),
                angle: STANCE_SHANK,
            },
            Link {
                mass: mt,
                inertia: rod(mt, lt),
                com: ChainPoint::one(lt / 2.0, SWING_THIGH),
                angle: SWING_THIGH,
            },
            Link {
                mass: ms,
                inertia: rod(ms, ls),
                com: ChainPoint::two(lt, SWING_THIGH, ls / 2.0, SWING_SHANK),
                angle: SWING_SHANK,
            },
        ];
        Ok(Self {
            links,
            stance_foot: ChainPoint::two(lt, STANCE_THIGH, ls, STANCE_SHANK),
            swing_foot: ChainPoint::two(lt, SWING_THIGH, ls, SWING_SHANK),
            stance_knee: ChainPoint::one(lt, STANCE_THIGH),
            swing_knee: ChainPoint::one(lt, SWING_THIGH),
            params,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Gravity vector `(0, −g)`.
    pub fn gravity(&self) -> Vector2<f64> {
        Vector2::new(0.0, -self.params.gravity)
    }

    /// `H(q) = Σ m JᵀJ + I aᵀa`.
    pub fn mass_matrix(&self, q: &Config) -> Mat6 {
        let mut h = Mat6::zeros();
        for link in &self.links {
            let j = link.com.jacobian(q);
            h += j.transpose() * j * link.mass;
            let a = SVector::<f64, 6>::from_row_slice(&link.angle);
            h += a * a.transpose() * link.inertia;
        }
        // Exact symmetry regardless of summation order.
        (h + h.transpose()) * 0.5
    }

    /// `C(q, q̇)`: Coriolis, centrifugal and gravity generalized forces.
    pub fn bias_forces(&self, q: &Config, v: &Config) -> Config {
        let g = self.gravity();
        self.links
            .iter()
            .map(|link| {
                let j = link.com.jacobian(q);
                j.transpose() * ((link.com.bias_acceleration(q, v) - g) * link.mass)
            })
            .sum()
    }

    /// Kinetic plus potential energy.
    pub fn energy(&self, q: &Config, v: &Config) -> f64 {
        0.5 * v.dot(&(self.mass_matrix(q) * v)) + self.potential_energy(q)
    }

    pub fn potential_energy(&self, q: &Config) -> f64 {
        self.links
            .iter()
            .map(|link| link.mass * self.params.gravity * link.com.position(q).y)
            .sum()
    }

    /// Mass-weighted mean of the link centres.
    pub fn com_position(&self, q: &Config) -> Vector2<f64> {
        let weighted: Vector2<f64> = self.links.iter().map(|l| l.com.position(q) * l.mass).sum();
        weighted / self.total_mass()
    }

    pub fn com_jacobian(&self, q: &Config) -> Jac2 {
        let weighted: Jac2 = self.links.iter().map(|l| l.com.jacobian(q) * l.mass).sum();
        weighted / self.total_mass()
    }

    /// Centroidal momentum matrix: rows are linear momentum `(x, z)` and
    /// angular momentum about the CoM.
    pub fn centroidal_momentum_matrix(&self, q: &Config) -> SMatrix<f64, 3, 6> {
        let c = self.com_position(q);
        let mut ag = SMatrix::<f64, 3, 6>::zeros();
        for link in &self.links {
            let j = link.com.jacobian(q);
            let r = link.com.position(q) - c;
            for col in 0..6 {
                let jc = Vector2::new(j[(0, col)], j[(1, col)]);
                ag[(0, col)] += link.mass * jc.x;
                ag[(1, col)] += link.mass * jc.y;
                ag[(2, col)] += link.mass * cross2(&r, &jc) + link.inertia * link.angle[col];
            }
        }
        ag
    }

    /// Composite rotational inertia about the CoM.
    pub fn composite_inertia(&self, q: &Config) -> f64 {
        let c = self.com_position(q);
        self.links
            .iter()
            .map(|l| l.mass * (l.com.position(q) - c).norm_squared() + l.inertia)
            .sum()
    }

    /// Actuation matrix `B` (6×3): torques act on hip, stance knee and swing knee.
    pub fn actuation(&self) -> SMatrix<f64, 6, 3> {
        let mut b = SMatrix::<f64, 6, 3>::zeros();
        for i in 0..3 {
            b[(ACTUATED_OFFSET + i, i)] = 1.0;
        }
        b
    }
}

/// Spectral condition number of a symmetric 2×2 matrix; infinite unless
/// positive definite.
pub(crate) fn spd2_condition(m: &Matrix2<f64>) -> f64 {
    let tr = m.trace();
    let det = m.determinant();
    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
    let hi = tr / 2.0 + disc;
    let lo = tr / 2.0 - disc;
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
