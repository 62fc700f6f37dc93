//! Ground profiles, footstep plans and swing-foot references.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground height as a function of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Terrain {
    Flat {
        #[serde(default)]
        height: f64,
    },
    /// `count` steps of height `rise` and depth `run`; the first riser is at `start`.
    Stairs {
        rise: f64,
        run: f64,
        count: usize,
        start: f64,
    },
}

impl Default for Terrain {
    fn default() -> Self {
        Terrain::Flat { height: 0.0 }
    }
}

impl Terrain {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Terrain::Flat { height } if height.is_finite() => Ok(()),
            Terrain::Stairs { rise, run, start, .. } if rise.is_finite() && run > 0.0 && start.is_finite() => Ok(()),
            _ => Err(Error::InvalidInput(format!("invalid terrain {self:?}"))),
        }
    }

    pub fn height(&self, x: f64) -> f64 {
        match *self {
            Terrain::Flat { height } => height,
            Terrain::Stairs {
                rise,
                run,
                count,
                start,
            } => {
                if x < start {
                    0.0
                } else {
                    let climbed = ((x - start) / run).floor() as usize + 1;
                    rise * climbed.min(count) as f64
                }
            }
        }
    }

    /// Largest height over `[a, b]`.
    pub fn max_height(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match *self {
            Terrain::Flat { height } => height,
            // Stair heights are monotone in x.
            Terrain::Stairs { .. } => self.height(lo).max(self.height(hi)),
        }
    }
}

/// Foothold sequence. Element 0 is the initial trailing (swing) foot and
/// element 1 the initial stance foot; walking step `i ≥ 1` stands on
/// element `i` and swings from element `i − 1` to element `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FootstepPlan {
    pub footholds: Vec<Vector2<f64>>,
}

impl FootstepPlan {
    /// Evenly spaced footholds on `terrain`; the first stance foot is at `x0`.
    pub fn regular(terrain: &Terrain, x0: f64, step_length: f64, steps: usize) -> Self {
        let footholds = (0..steps + 2)
            .map(|i| {
                let x = x0 + step_length * (i as f64 - 1.0);
                Vector2::new(x, terrain.height(x))
            })
            .collect();
        Self { footholds }
    }

    /// Explicit footholds; heights are taken from `terrain`.
    pub fn from_positions(terrain: &Terrain, xs: &[f64]) -> Self {
        Self {
            footholds: xs.iter().map(|&x| Vector2::new(x, terrain.height(x))).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.footholds.len().saturating_sub(2)
    }

    /// Every foothold lies on the terrain.
    pub fn validate(&self, terrain: &Terrain) -> Result<()> {
        if self.footholds.len() < 3 {
            return Err(Error::InvalidInput(
                "footstep plan needs at least three footholds".into(),
            ));
        }
        for (i, p) in self.footholds.iter().enumerate() {
            if (p.y - terrain.height(p.x)).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("foothold {i} at {p:?} is off the terrain")));
            }
        }
        Ok(())
    }
}

/// Minimum-jerk blend `10s³ − 15s⁴ + 6s⁵`.
fn blend(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Quintic swing-foot path from `start` to `end` over `samples` points.
///
/// Horizontal motion follows the minimum-jerk blend; the vertical profile adds
/// a bump `16 b s²(1−s)²` so the apex clears the higher endpoint by
/// `clearance`. Both endpoints have zero velocity.
pub fn swing_reference(start: Vector2<f64>, end: Vector2<f64>, clearance: f64, samples: usize) -> Vec<Vector2<f64>> {
    let bump = start.y.max(end.y) + clearance - 0.5 * (start.y + end.y);
    (0..samples)
        .map(|k| {
            let s = if samples > 1 {
                k as f64 / (samples - 1) as f64
            } else {
                1.0
            };
            let b = blend(s);
            Vector2::new(
                start.x + (end.x - start.x) * b,
                start.y + (end.y - start.y) * b + 16.0 * bump * s * s * (1.0 - s) * (1.0 - s),
            )
        })
        .collect()
}
