use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six coupling constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintId {
    /// CoM consensus `CoM(q) = c`.
    Com,
    /// Momentum consensus `A_g(q) q̇ = (m ċ, I θ̇)`.
    Momentum,
    /// Contact-force consensus `g_λ = λ`.
    ContactForce,
    /// State-box consistency `s = s̄`.
    StateBox,
    /// Control-box consistency `u = ū`.
    ControlBox,
    /// Friction-cone consistency `g_λ = λ̄`.
    FrictionCone,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 6] = [
        ConstraintId::Com,
        ConstraintId::Momentum,
        ConstraintId::ContactForce,
        ConstraintId::StateBox,
        ConstraintId::ControlBox,
        ConstraintId::FrictionCone,
    ];

    /// Short symbol used in tables and configs.
    pub fn symbol(self) -> &'static str {
        match self {
            ConstraintId::Com => "c",
            ConstraintId::Momentum => "h",
            ConstraintId::ContactForce => "lambda",
            ConstraintId::StateBox => "j",
            ConstraintId::ControlBox => "t",
            ConstraintId::FrictionCone => "f",
        }
    }

    /// Whether the other side of the constraint is a projection copy.
    pub fn is_projection(self) -> bool {
        matches!(
            self,
            ConstraintId::StateBox | ConstraintId::ControlBox | ConstraintId::FrictionCone
        )
    }
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// One value per constraint id.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerConstraint<T> {
    pub c: T,
    pub h: T,
    pub lambda: T,
    pub j: T,
    pub t: T,
    pub f: T,
}

impl<T> PerConstraint<T> {
    pub fn from_fn(mut f: impl FnMut(ConstraintId) -> T) -> Self {
        Self {
            c: f(ConstraintId::Com),
            h: f(ConstraintId::Momentum),
            lambda: f(ConstraintId::ContactForce),
            j: f(ConstraintId::StateBox),
            t: f(ConstraintId::ControlBox),
            f: f(ConstraintId::FrictionCone),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(ConstraintId, &T) -> U) -> PerConstraint<U> {
        PerConstraint::from_fn(|id| f(id, &self[id]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConstraintId, &T)> {
        ConstraintId::ALL.into_iter().map(move |id| (id, &self[id]))
    }
}

impl<T> Index<ConstraintId> for PerConstraint<T> {
    type Output = T;
    fn index(&self, id: ConstraintId) -> &T {
        match id {
            ConstraintId::Com => &self.c,
            ConstraintId::Momentum => &self.h,
            ConstraintId::ContactForce => &self.lambda,
            ConstraintId::StateBox => &self.j,
            ConstraintId::ControlBox => &self.t,
            ConstraintId::FrictionCone => &self.f,
        }
    }
}

impl<T> IndexMut<ConstraintId> for PerConstraint<T> {
    fn index_mut(&mut self, id: ConstraintId) -> &mut T {
        match id {
            ConstraintId::Com => &mut self.c,
            ConstraintId::Momentum => &mut self.h,
            ConstraintId::ContactForce => &mut self.lambda,
            ConstraintId::StateBox => &mut self.j,
            ConstraintId::ControlBox => &mut self.t,
            ConstraintId::FrictionCone => &mut self.f,
        }
    }
}

/// Stacked 2-norm of a residual trajectory.
pub(crate) fn trajectory_norm(seq: &[DVector<f64>]) -> f64 {
    seq.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
}

/// Dual, penalty and residuals of one constraint.
///
/// `dual`, `primal_residual` and `dual_residual` share one horizon and one
/// vector dimension. Inactive constraints keep empty sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintState {
    pub active: bool,
    /// Penalty `ρ > 0`.
    pub rho: f64,
    /// Scaled dual `w = y / ρ`, one vector per time index.
    pub dual: Vec<DVector<f64>>,
    pub primal_residual: Vec<DVector<f64>>,
    pub dual_residual: Vec<DVector<f64>>,
}

impl ConstraintState {
    pub fn primal_norm(&self) -> f64 {
        trajectory_norm(&self.primal_residual)
    }

    pub fn dual_norm(&self) -> f64 {
        trajectory_norm(&self.dual_residual)
    }

    /// `ρ ← κρ` with `w ← w/κ`, which keeps the unscaled dual `ρw` fixed.
    pub fn rescale(&mut self, factor: f64) {
        self.rho *= factor;
        for w in &mut self.dual {
            *w /= factor;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingState {
    pub constraints: PerConstraint<ConstraintState>,
}

impl CouplingState {
    /// Zero duals and residuals; `shapes[id] = Some((horizon, dim))` marks
    /// active constraints.
    pub fn new(rho: &PerConstraint<f64>, shapes: &PerConstraint<Option<(usize, usize)>>) -> Result<Self> {
        for (id, &r) in rho.iter() {
            if shapes[id].is_some() && !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "penalty rho_{id} must be positive, got {r}"
                )));
            }
        }
        Ok(Self {
            constraints: PerConstraint::from_fn(|id| {
                let zeros = |(n, d): (usize, usize)| vec![DVector::zeros(d); n];
                ConstraintState {
                    active: shapes[id].is_some(),
                    rho: rho[id],
                    dual: shapes[id].map(zeros).unwrap_or_default(),
                    primal_residual: shapes[id].map(zeros).unwrap_or_default(),
                    dual_residual: shapes[id].map(zeros).unwrap_or_default(),
                }
            }),
        })
    }

    pub fn active(&self) -> impl Iterator<Item = ConstraintId> + '_ {
        ConstraintId::ALL.into_iter().filter(|&id| self.constraints[id].active)
    }

    pub fn rho(&self) -> PerConstraint<f64> {
        self.constraints.map(|_, s| s.rho)
    }
}

impl Index<ConstraintId> for CouplingState {
    type Output = ConstraintState;
    fn index(&self, id: ConstraintId) -> &ConstraintState {
        &self.constraints[id]
    }
}

impl IndexMut<ConstraintId> for CouplingState {
    fn index_mut(&mut self, id: ConstraintId) -> &mut ConstraintState {
        &mut self.constraints[id]
    }
}

/// `w_i ← w_i + r_i` for every active id present in `residuals`.
pub fn dual_update(coupling: &mut CouplingState, residuals: &PerConstraint<Option<Vec<DVector<f64>>>>) -> Result<()> {
    for id in ConstraintId::ALL {
        let state = &mut coupling.constraints[id];
        let Some(r) = &residuals[id] else { continue };
        if !state.active {
            continue;
        }
        if r.len() != state.dual.len() {
            return Err(Error::DimensionMismatch {
                context: "dual update horizon",
                expected: state.dual.len(),
                found: r.len(),
            });
        }
        for (w, ri) in state.dual.iter_mut().zip(r) {
            *w += ri;
        }
    }
    Ok(())
}

/// `α·primal + (1 − α)·copy` per time index.
pub fn relax(primal: &[DVector<f64>], copy: &[DVector<f64>], alpha: f64) -> Vec<DVector<f64>> {
    primal
        .iter()
        .zip(copy)
        .map(|(p, c)| p * alpha + c * (1.0 - alpha))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    OverRelaxed,
    VaryingPenalty,
    /// Over-relaxation throughout, penalty adaptation after `k_sw`.
    Swa,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Vanilla,
        Variant::OverRelaxed,
        Variant::VaryingPenalty,
        Variant::Swa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::OverRelaxed => "over_relaxed",
            Variant::VaryingPenalty => "varying_penalty",
            Variant::Swa => "swa",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelerationConfig {
    pub variant: Variant,
    /// Relaxation parameter in `(0, 2)`.
    pub alpha: f64,
    /// Residual-ratio threshold `μ > 1`.
    pub mu: f64,
    pub tau_incr: f64,
    pub tau_decr: f64,
    /// Iteration after which SWA starts adapting penalties.
    pub k_sw: usize,
}

impl Default for AccelerationConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Swa,
            alpha: 1.65,
            mu: 10.0,
            tau_incr: 2.0,
            tau_decr: 2.0,
            k_sw: 16,
        }
    }
}

impl AccelerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad(format!("alpha must lie in (0, 2), got {}", self.alpha));
        }
        if !(self.mu > 1.0) {
            return bad(format!("mu must exceed 1, got {}", self.mu));
        }
        if !(self.tau_incr > 1.0 && self.tau_decr > 1.0) {
            return bad(format!(
                "tau_incr and tau_decr must exceed 1, got {} and {}",
                self.tau_incr, self.tau_decr
            ));
        }
        Ok(())
    }

    /// Relaxation factor actually applied by the variant.
    pub fn effective_alpha(&self) -> f64 {
        match self.variant {
            Variant::OverRelaxed | Variant::Swa => self.alpha,
            Variant::Vanilla | Variant::VaryingPenalty => 1.0,
        }
    }

    /// Whether penalties adapt after completing `iteration` (1-based).
    pub fn adapts_at(&self, iteration: usize) -> bool {
        match self.variant {
            Variant::VaryingPenalty => iteration >= 1,
            Variant::Swa => iteration > self.k_sw,
            Variant::Vanilla | Variant::OverRelaxed => false,
        }
    }
}

/// Residual-balancing update of the projection penalties `{j, t, f}` using
/// the stored primal and dual residuals. Returns the factor applied to each
/// `ρ` (1 where unchanged).
pub fn adapt_penalty(coupling: &mut CouplingState, cfg: &AccelerationConfig, iteration: usize) -> PerConstraint<f64> {
    let mut factors = PerConstraint::from_fn(|_| 1.0);
    if !cfg.adapts_at(iteration) {
        return factors;
    }
    for id in ConstraintId::ALL.into_iter().filter(|id| id.is_projection()) {
        let state = &mut coupling.constraints[id];
        if !state.active {
            continue;
        }
        let r2 = state.primal_norm().powi(2);
        let d2 = state.dual_norm().powi(2);
        let factor = if r2 > cfg.mu * d2 {
            cfg.tau_incr
        } else if d2 > cfg.mu * r2 {
            1.0 / cfg.tau_decr
        } else {
            1.0
        };
        if factor != 1.0 {
            state.rescale(factor);
        }
        factors[id] = factor;
    }
    factors
}
