//! Standard test problems: a uniform source on the lower cap and several
//! targets on the upper hemisphere or on the plane `z = 0.5`.

use std::f64::consts::PI;

use crate::intensity::{raster_from_gray, stereographic_lift, Intensity, TargetBoundary};
use crate::pgm::GrayImage;
use crate::solver::{InitialGuess, MeshSpec, SolverConfig};
use crate::sphere::{CostSign, UnitVector, Vec3};

/// Half-angle of the source cap around `-e_z`.
pub const SOURCE_HALFANGLE: f64 = PI / 4.0;

/// Half-width of the letter target square on the plane `z = 0.5`.
pub const LETTER_HALF_WIDTH: f64 = 0.35;

/// Uniform unit intensity on the cap of half-angle `pi/4` around `-e_z`.
pub fn uniform_source() -> Intensity {
    Intensity::uniform_cap(-UnitVector::e_z(), SOURCE_HALFANGLE, 1.0)
}

/// Axis `(0, -sin(pi/8), cos(pi/8))` of the off-axis target cap.
pub fn off_axis() -> UnitVector {
    UnitVector::new_unchecked(Vec3::new(0.0, -(PI / 8.0).sin(), (PI / 8.0).cos()))
}

/// Radial plane reflector: the potential whose optical map is the mirror
/// reflection in the plane with unit normal `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneReflector {
    pub normal: Vec3,
    pub sign: CostSign,
    /// Additive constant; see [`PlaneReflector::zero_mean_on`].
    pub offset: f64,
}

impl PlaneReflector {
    /// The plane mirror reflecting `-e_z` into `target`.
    pub fn sending_down_axis_to(target: &UnitVector, sign: CostSign) -> Self {
        let v = target.as_vec() + Vec3::z();
        PlaneReflector {
            normal: v / v.norm(),
            sign,
            offset: 0.0,
        }
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        -self.sign.value() * (-x.dot(&self.normal)).ln() + self.offset
    }

    pub fn gradient(&self, x: &Vec3) -> Vec3 {
        let d = x.dot(&self.normal);
        let tangential = self.normal - x * d;
        -self.sign.value() * tangential / d
    }

    /// Sets the constant so that the `L2` mean over the source cap vanishes.
    pub fn zero_mean_on(mut self, space: &crate::fem::FeSpace) -> Self {
        self.offset = 0.0;
        let mean = space.integrate_fn(|x| self.value(x)) / space.area();
        self.offset = -mean;
        self
    }
}

/// Off-axis cap target with an exact plane reflector solution.
pub fn off_axis_config(n: usize, sign: CostSign) -> SolverConfig {
    let q = off_axis();
    let mut cfg = SolverConfig::new(
        MeshSpec::cap(SOURCE_HALFANGLE, n),
        sign,
        uniform_source(),
        Intensity::cap_indicator(q, PI / 4.0),
        TargetBoundary::CapCircle {
            axis: q,
            halfangle: PI / 4.0,
        },
    );
    cfg.tau = 0.5;
    cfg.u0 = InitialGuess::PlaneReflector { normal: Vec3::z() };
    cfg
}

/// Smooth bump target on the upper cap with contrast about 12.
pub fn smooth_bump_target() -> Intensity {
    Intensity::smooth_bump(UnitVector::e_z(), PI / 4.0, 0.3, 1.0, 12.0)
}

pub fn smooth_bump_config(n: usize) -> SolverConfig {
    let mut cfg = SolverConfig::new(
        MeshSpec::cap(SOURCE_HALFANGLE, n),
        CostSign::NegLog,
        uniform_source(),
        smooth_bump_target(),
        TargetBoundary::CapCircle {
            axis: UnitVector::e_z(),
            halfangle: PI / 4.0,
        },
    );
    cfg.tau = 0.5;
    cfg
}

/// Source and target are antipodal copies; `u = 0` is optimal.
pub fn antipodal_config(n: usize) -> SolverConfig {
    let mut cfg = SolverConfig::new(
        MeshSpec::cap(SOURCE_HALFANGLE, n),
        CostSign::NegLog,
        uniform_source(),
        Intensity::uniform_cap(UnitVector::e_z(), SOURCE_HALFANGLE, 1.0),
        TargetBoundary::CapCircle {
            axis: UnitVector::e_z(),
            halfangle: SOURCE_HALFANGLE,
        },
    );
    cfg.tau = 0.5;
    cfg
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Square image of a white capital A on black.
pub fn letter_a_image(size: usize) -> GrayImage {
    let mut img = GrayImage::new(size, size, 255);
    let apex = (0.5, 0.1);
    let (left, right) = ((0.15, 0.9), (0.85, 0.9));
    let half_stroke = 0.07;
    for r in 0..size {
        for c in 0..size {
            let p = ((c as f64 + 0.5) / size as f64, (r as f64 + 0.5) / size as f64);
            let on_leg = segment_distance(p, apex, left) <= half_stroke || segment_distance(p, apex, right) <= half_stroke;
            let on_bar = (0.55..=0.65).contains(&p.1) && {
                // between the inner edges of the two legs
                let t = (p.1 - apex.1) / (left.1 - apex.1);
                let (xl, xr) = (apex.0 + t * (left.0 - apex.0), apex.0 + t * (right.0 - apex.0));
                p.0 >= xl && p.0 <= xr
            };
            if on_leg || on_bar {
                img.set(r, c, 255);
            }
        }
    }
    img
}

/// Letter A on the plane square, lifted to the sphere.
pub fn letter_a_target(size: usize) -> Intensity {
    let raster = raster_from_gray(&letter_a_image(size), LETTER_HALF_WIDTH, 0.5, None)
        .expect("letter image has nonempty support");
    stereographic_lift(raster)
}

pub fn letter_a_config(n: usize) -> SolverConfig {
    let mut cfg = SolverConfig::new(
        MeshSpec::cap(SOURCE_HALFANGLE, n),
        CostSign::NegLog,
        uniform_source(),
        letter_a_target(128),
        TargetBoundary::plane_square(LETTER_HALF_WIDTH),
    );
    cfg.tau = 0.3;
    cfg.max_iter = 30;
    cfg
}
