//! Unit-sphere geometry for the logarithmic reflector cost.
//!
//! The cost between a source direction `x` and a target direction `y` is
//! `c(x, y) = s * log(1 - x.y)` with sign `s = -1` or `s = +1`.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Smallest admissible value of `1 - x.y` before the cost is treated as singular.
pub const SINGULAR_GAP: f64 = 1e-12;

/// Height of the projection plane used for planar targets.
pub const PLANE_HEIGHT: f64 = 0.5;

/// Directions with `y_3` at or below this value never reach the projection plane.
pub const MIN_ELEVATION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSign {
    /// `c = -log(1 - x.y)`, reflector `rho = exp(-u)`.
    NegLog,
    /// `c = +log(1 - x.y)`, reflector `rho = exp(u)`.
    PosLog,
}

impl CostSign {
    pub fn value(self) -> f64 {
        match self {
            CostSign::NegLog => -1.0,
            CostSign::PosLog => 1.0,
        }
    }

    pub fn from_value(s: f64) -> Result<Self> {
        if s == -1.0 {
            Ok(CostSign::NegLog)
        } else if s == 1.0 {
            Ok(CostSign::PosLog)
        } else {
            Err(Error::InvalidParameter(format!("cost sign must be -1 or +1, got {s}")))
        }
    }

    /// Radial function of the reflector for the potential value `u`.
    pub fn radius(self, u: f64) -> f64 {
        match self {
            CostSign::NegLog => (-u).exp(),
            CostSign::PosLog => u.exp(),
        }
    }
}

/// A point on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitVector(Vec3);

impl UnitVector {
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize vector ({}, {}, {})",
                v.x, v.y, v.z
            )));
        }
        Ok(UnitVector(v / n))
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Vec3::new(x, y, z))
    }

    /// Wraps a vector that is already of unit length.
    pub fn new_unchecked(v: Vec3) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9);
        UnitVector(v)
    }

    pub fn e_x() -> Self {
        UnitVector(Vec3::x())
    }

    pub fn e_y() -> Self {
        UnitVector(Vec3::y())
    }

    pub fn e_z() -> Self {
        UnitVector(Vec3::z())
    }

    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn into_vec(self) -> Vec3 {
        self.0
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.0.dot(&other.0)
    }
}

impl std::ops::Neg for UnitVector {
    type Output = UnitVector;
    fn neg(self) -> UnitVector {
        UnitVector(-self.0)
    }
}

/// A tangent vector `v` at `base`, with `v.base = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: UnitVector,
    pub v: Vec3,
}

impl TangentVector {
    /// Projects `v` onto the tangent plane at `base`.
    pub fn project(base: UnitVector, v: Vec3) -> Self {
        let x = base.as_vec();
        TangentVector {
            base,
            v: v - x * x.dot(&v),
        }
    }

    pub fn zero(base: UnitVector) -> Self {
        TangentVector {
            base,
            v: Vec3::zeros(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }
}

fn gap(x: &Vec3, y: &Vec3) -> f64 {
    1.0 - x.dot(y)
}

pub fn cost(x: &UnitVector, y: &UnitVector, s: CostSign) -> Result<f64> {
    let g = gap(x.as_vec(), y.as_vec());
    if g < SINGULAR_GAP {
        return Err(Error::Domain { gap: g });
    }
    Ok(s.value() * g.ln())
}

/// Tangential gradient of the cost in its first argument.
pub fn grad_x_cost(x: &UnitVector, y: &UnitVector, s: CostSign) -> Result<TangentVector> {
    let inv = inverse_map(x, y, s)?;
    Ok(TangentVector {
        base: *x,
        v: -inv.v,
    })
}

pub(crate) fn reflect_raw(x: &Vec3, p: &Vec3, s: f64) -> Vec3 {
    let p2 = p.norm_squared();
    (x * (p2 - 1.0) + p * (2.0 * s)) / (p2 + 1.0)
}

/// Direction of the ray leaving `x` after reflection off a surface whose
/// potential has tangential gradient `p`.
pub fn reflector_map(p: &TangentVector, s: CostSign) -> UnitVector {
    let y = reflect_raw(p.base.as_vec(), &p.v, s.value());
    // |y| = 1 algebraically; renormalize away rounding
    UnitVector(y / y.norm())
}

pub(crate) fn inverse_raw(x: &Vec3, y: &Vec3, s: f64) -> Vec3 {
    let xy = x.dot(y);
    (y - x * xy) * (s / (1.0 - xy).max(SINGULAR_GAP))
}

/// Gradient `p` at `x` for which the reflector map sends `x` to `y`.
pub fn inverse_map(x: &UnitVector, y: &UnitVector, s: CostSign) -> Result<TangentVector> {
    let g = gap(x.as_vec(), y.as_vec());
    if g < SINGULAR_GAP {
        return Err(Error::Domain { gap: g });
    }
    Ok(TangentVector {
        base: *x,
        v: inverse_raw(x.as_vec(), y.as_vec(), s.value()),
    })
}

pub(crate) fn exp_raw(x: &Vec3, v: &Vec3) -> Vec3 {
    let t = v.norm();
    if t < 1e-300 {
        return *x;
    }
    let y = x * t.cos() + v * (t.sin() / t);
    y / y.norm()
}

pub fn exp_map(v: &TangentVector) -> UnitVector {
    UnitVector(exp_raw(v.base.as_vec(), &v.v))
}

pub(crate) fn log_raw(x: &Vec3, y: &Vec3) -> Vec3 {
    let w = y - x * x.dot(y);
    let wn = w.norm();
    if wn < 1e-300 {
        return Vec3::zeros();
    }
    w * (angle_raw(x, y) / wn)
}

/// Inverse of [`exp_map`]. Fails for the antipode, where it is undefined.
pub fn log_map(x: &UnitVector, y: &UnitVector) -> Result<TangentVector> {
    if 1.0 + x.dot(y) < 1e-14 {
        return Err(Error::Domain { gap: 2.0 });
    }
    Ok(TangentVector {
        base: *x,
        v: log_raw(x.as_vec(), y.as_vec()),
    })
}

pub(crate) fn angle_raw(x: &Vec3, y: &Vec3) -> f64 {
    x.cross(y).norm().atan2(x.dot(y))
}

pub fn geodesic_distance(x: &UnitVector, y: &UnitVector) -> f64 {
    angle_raw(x.as_vec(), y.as_vec())
}

/// Distance from `y` to the circle of angular radius `theta` about `q`;
/// negative inside the cap.
pub fn signed_distance_to_cap_boundary(y: &UnitVector, q: &UnitVector, theta: f64) -> f64 {
    geodesic_distance(y, q) - theta
}

/// Orthonormal tangent frame `(e1, e2)` at `q` with `e1 x e2 = q`.
pub fn tangent_frame(q: &UnitVector) -> (Vec3, Vec3) {
    let qv = q.as_vec();
    let mut axis = 0;
    for i in 1..3 {
        if qv[i].abs() < qv[axis].abs() - 1e-15 {
            axis = i;
        }
    }
    let mut a = Vec3::zeros();
    a[axis] = 1.0;
    let e1 = (a - qv * qv.dot(&a)).normalize();
    let e2 = qv.cross(&e1);
    (e1, e2)
}

pub(crate) fn project_cap_raw(y: &Vec3, q: &Vec3, theta: f64, e1: &Vec3) -> Vec3 {
    let w = y - q * q.dot(y);
    let wn = w.norm();
    let dir = if wn < 1e-14 {
        warn!("point is on the cap axis; projecting to azimuth zero");
        *e1
    } else {
        w / wn
    };
    q * theta.cos() + dir * theta.sin()
}

/// Closest point of the circle of angular radius `theta` about `q`.
pub fn project_to_cap_boundary(y: &UnitVector, q: &UnitVector, theta: f64) -> UnitVector {
    let (e1, _) = tangent_frame(q);
    UnitVector(project_cap_raw(y.as_vec(), q.as_vec(), theta, &e1))
}

/// Determinant of `sigma P + t x^T`, where `P = I - x x^T`.
pub fn jacobian_det(x: &UnitVector, sigma: &Mat3, t: &Vec3) -> f64 {
    jacobian_det_raw(x.as_vec(), sigma, t)
}

pub(crate) fn jacobian_det_raw(x: &Vec3, sigma: &Mat3, t: &Vec3) -> f64 {
    let p = Mat3::identity() - x * x.transpose();
    (sigma * p + t * x.transpose()).determinant()
}

/// Central projection of a direction onto the plane `z = 0.5`.
pub fn to_plane(y: &UnitVector) -> Option<(f64, f64)> {
    let v = y.as_vec();
    if v.z <= MIN_ELEVATION {
        return None;
    }
    Some((PLANE_HEIGHT * v.x / v.z, PLANE_HEIGHT * v.y / v.z))
}

pub fn from_plane(px: f64, py: f64) -> UnitVector {
    UnitVector(Vec3::new(px, py, PLANE_HEIGHT).normalize())
}

/// Ratio of plane area to solid angle at the plane point `(px, py)`.
pub fn lift_factor(px: f64, py: f64) -> f64 {
    let r2 = px * px + py * py + PLANE_HEIGHT * PLANE_HEIGHT;
    r2 * r2.sqrt() / PLANE_HEIGHT
}
