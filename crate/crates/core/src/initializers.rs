//! Initial embedding fields.
//!
//! Nodal (trigonometric) approximations of the Schwartz P, Schwartz D and
//! Schoen G surfaces, `φ = w₁T₁ + w₂T₂`, with `c = cos 2π·`, `s = sin 2π·` and
//! `c2 = cos 4π·`:
//!
//! | family | T₁ | T₂ |
//! |---|---|---|
//! | P | `cx + cy + cz` | `cx·cy + cy·cz + cz·cx` |
//! | D | `sx·sy·sz + sx·cy·cz + cx·sy·cz + cx·cy·sz` | `c2x·c2y + c2y·c2z + c2z·c2x` |
//! | G | `sx·cy + sy·cz + sz·cx` | `c2x·c2y + c2y·c2z + c2z·c2x` |
//!
//! Both terms of each family are invariant under the family's generating
//! operations, so any weighting keeps the symmetry:
//!
//! * P: axis permutations and the reflection `x -> -x`.
//! * D: axis permutations and the translation `(x, y, z) -> (x + ½, y + ½, z)`.
//! * G: the cyclic permutation `(x, y, z) -> (y, z, x)` and
//!   `(x, y, z) -> (x + ½, ½ - y, -z)`.
//!
//! Primitive shapes are exact signed distances (minimum image), negative
//! inside phase 1.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    P,
    D,
    G,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::P => "P",
            Family::D => "D",
            Family::G => "G",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "P" => Ok(Family::P),
            "D" => Ok(Family::D),
            "G" => Ok(Family::G),
            other => Err(Error::InvalidParameter(format!(
                "unknown nodal family '{other}' (expected P, D or G)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodalSpec {
    pub family: Family,
    pub term_weights: (f64, f64),
}

impl NodalSpec {
    pub fn new(family: Family, w1: f64, w2: f64) -> Result<Self> {
        if !(w1.is_finite() && w2.is_finite()) || (w1 == 0.0 && w2 == 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nodal weights ({w1}, {w2}) must be finite and not both zero"
            )));
        }
        Ok(Self {
            family,
            term_weights: (w1, w2),
        })
    }

    /// Leading-order nodal surface, weights `(1, 0)`.
    pub fn leading(family: Family) -> Self {
        Self {
            family,
            term_weights: (1.0, 0.0),
        }
    }

    pub fn eval(&self, p: [f64; 3]) -> f64 {
        let (w1, w2) = self.term_weights;
        let (t1, t2) = nodal_terms(self.family, p);
        w1 * t1 + w2 * t2
    }
}

fn nodal_terms(family: Family, p: [f64; 3]) -> (f64, f64) {
    let a = [2.0 * PI * p[0], 2.0 * PI * p[1], 2.0 * PI * p[2]];
    let (sx, cx) = a[0].sin_cos();
    let (sy, cy) = a[1].sin_cos();
    let (sz, cz) = a[2].sin_cos();
    let (c2x, c2y, c2z) = ((2.0 * a[0]).cos(), (2.0 * a[1]).cos(), (2.0 * a[2]).cos());
    let second_cubic = c2x * c2y + c2y * c2z + c2z * c2x;
    match family {
        Family::P => (cx + cy + cz, cx * cy + cy * cz + cz * cx),
        Family::D => (sx * sy * sz + sx * cy * cz + cx * sy * cz + cx * cy * sz, second_cubic),
        Family::G => (sx * cy + sy * cz + sz * cx, second_cubic),
    }
}

pub fn nodal_field(spec: &NodalSpec, grid: PeriodicGrid) -> ScalarField {
    let spec = *spec;
    ScalarField::from_fn(grid, move |p| spec.eval(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Sphere,
    Cube,
    /// Infinite square channel along z.
    SquareChannel,
    /// Three orthogonal circular channels through the center.
    CircularChannels,
}

impl FromStr for PrimitiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "sphere" => Ok(Self::Sphere),
            "cube" => Ok(Self::Cube),
            "square_channel" | "channel" => Ok(Self::SquareChannel),
            "circular_channels" | "channels" | "circular_channels_3axis" => Ok(Self::CircularChannels),
            other => Err(Error::InvalidParameter(format!("unknown primitive '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    /// Radius or half-edge.
    pub size: f64,
    pub center: [f64; 3],
}

impl PrimitiveSpec {
    pub fn centered(kind: PrimitiveKind, size: f64) -> Self {
        Self {
            kind,
            size,
            center: [0.5; 3],
        }
    }

    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        if !(self.size > 0.0) || !self.size.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "shape size must be positive, got {}",
                self.size
            )));
        }
        if self.center.iter().any(|c| !(0.0..1.0).contains(c)) {
            return Err(Error::InvalidParameter(format!(
                "center {:?} must lie in [0,1)^3",
                self.center
            )));
        }
        let limit = 0.5 - grid.max_spacing();
        if self.size >= limit {
            return Err(Error::ShapeTooLarge(format!(
                "size {} must be below {limit}",
                self.size
            )));
        }
        Ok(())
    }

    /// Signed distance at `p`, using the periodic minimum image of `p - center`.
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        let d = min_image([p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]]);
        let a = self.size;
        match self.kind {
            PrimitiveKind::Sphere => norm(d) - a,
            PrimitiveKind::Cube => box_distance(&[d[0].abs() - a, d[1].abs() - a, d[2].abs() - a]),
            PrimitiveKind::SquareChannel => box_distance(&[d[0].abs() - a, d[1].abs() - a]),
            PrimitiveKind::CircularChannels => {
                let along_x = (d[1] * d[1] + d[2] * d[2]).sqrt();
                let along_y = (d[0] * d[0] + d[2] * d[2]).sqrt();
                let along_z = (d[0] * d[0] + d[1] * d[1]).sqrt();
                along_x.min(along_y).min(along_z) - a
            }
        }
    }
}

fn min_image(d: [f64; 3]) -> [f64; 3] {
    d.map(|v| v - v.round())
}

fn norm(d: [f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Exact signed distance to an axis-aligned box given `q = |d| - half_edge`.
fn box_distance(q: &[f64]) -> f64 {
    let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
    let inside = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max).min(0.0);
    outside + inside
}

pub fn primitive_field(spec: &PrimitiveSpec, grid: PeriodicGrid) -> Result<ScalarField> {
    spec.validate(&grid)?;
    let spec = *spec;
    Ok(ScalarField::from_fn(grid, move |p| spec.eval(p)))
}
