//! Source and target intensities on the sphere and on the plane `z = 0.5`.

use std::path::Path;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{CapMesh, GeometryOrder};
use crate::pgm::{read_pgm, GrayImage};
use crate::quadrature::triangle_rule;
use crate::sphere::{
    angle_raw, from_plane, geodesic_distance, lift_factor, project_cap_raw, signed_distance_to_cap_boundary,
    tangent_frame, to_plane, UnitVector, Vec3, MIN_ELEVATION, PLANE_HEIGHT,
};

/// Masses below this are treated as zero.
pub const MIN_MASS: f64 = 1e-14;

/// Gridded density on the square `[-a, a]^2` of the plane `z = 0.5`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneRaster {
    pub width: usize,
    pub height: usize,
    /// Row-major values, row 0 at `y = +a`.
    pub values: Vec<f64>,
    pub half_width: f64,
}

impl PlaneRaster {
    /// Bilinear interpolation between pixel centers; zero outside the square.
    pub fn eval(&self, px: f64, py: f64) -> f64 {
        let a = self.half_width;
        if px.abs() > a || py.abs() > a {
            return 0.0;
        }
        let fx = ((px + a) / (2.0 * a) * self.width as f64 - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = ((a - py) / (2.0 * a) * self.height as f64 - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (c0, r0) = (fx.floor() as usize, fy.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(self.width - 1), (r0 + 1).min(self.height - 1));
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let v = |r: usize, c: usize| self.values[r * self.width + c];
        (1.0 - ty) * ((1.0 - tx) * v(r0, c0) + tx * v(r0, c1)) + ty * ((1.0 - tx) * v(r1, c0) + tx * v(r1, c1))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Integral over the plane square, by a tensor Gauss rule on each pixel cell.
    pub fn plane_mass(&self) -> f64 {
        self.plane_integral(|_, _, v| v)
    }

    /// `int f(x, y, g(x, y)) dx dy` over the square, cell by cell.
    pub fn plane_integral(&self, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let (x, w) = crate::quadrature::gauss_legendre(3);
        let a = self.half_width;
        let (dx, dy) = (2.0 * a / self.width as f64, 2.0 * a / self.height as f64);
        let mut total = 0.0;
        for r in 0..self.height {
            for c in 0..self.width {
                for (sx, wx) in x.iter().zip(&w) {
                    for (sy, wy) in x.iter().zip(&w) {
                        let px = -a + (c as f64 + sx) * dx;
                        let py = a - (r as f64 + sy) * dy;
                        total += wx * wy * f(px, py, self.eval(px, py));
                    }
                }
            }
        }
        total * dx * dy
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum IntensityKind {
    /// Constant `height` on a cap.
    UniformCap { axis: UnitVector, halfangle: f64, height: f64 },
    /// `base + (peak - base) exp(-d^2 / width^2)` on a cap, `d` the distance to `axis`.
    SmoothBump {
        axis: UnitVector,
        halfangle: f64,
        width: f64,
        base: f64,
        peak: f64,
    },
    /// Indicator `height * 1{y.axis >= cos(halfangle)}`, optionally smoothed over
    /// a band of angular half-width `mollify` around the rim.
    CapIndicator {
        axis: UnitVector,
        halfangle: f64,
        height: f64,
        mollify: f64,
    },
    /// Planar raster carried to the sphere by central projection, with the
    /// area factor of the projection.
    Lifted(PlaneRaster),
    /// `base^alpha`, a lower-contrast version of `base` on the same support.
    Power { base: Box<Intensity>, alpha: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intensity {
    pub kind: IntensityKind,
    pub scale: f64,
}

fn smooth_step(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 + (0.5 * std::f64::consts::PI * s).sin())
    }
}

impl Intensity {
    pub fn new(kind: IntensityKind) -> Self {
        Intensity { kind, scale: 1.0 }
    }

    pub fn uniform_cap(axis: UnitVector, halfangle: f64, height: f64) -> Self {
        Self::new(IntensityKind::UniformCap { axis, halfangle, height })
    }

    pub fn cap_indicator(axis: UnitVector, halfangle: f64) -> Self {
        Self::new(IntensityKind::CapIndicator {
            axis,
            halfangle,
            height: 1.0,
            mollify: 0.0,
        })
    }

    pub fn smooth_bump(axis: UnitVector, halfangle: f64, width: f64, base: f64, peak: f64) -> Self {
        Self::new(IntensityKind::SmoothBump {
            axis,
            halfangle,
            width,
            base,
            peak,
        })
    }

    pub fn lifted(raster: PlaneRaster) -> Self {
        Self::new(IntensityKind::Lifted(raster))
    }

    /// Density at a point of the unit sphere.
    pub fn eval(&self, y: &Vec3) -> f64 {
        self.scale * self.eval_raw(y)
    }

    pub fn eval_unit(&self, y: &UnitVector) -> f64 {
        self.eval(y.as_vec())
    }

    fn eval_raw(&self, y: &Vec3) -> f64 {
        // tolerance so that points placed exactly on a rim count as inside
        const RIM: f64 = 1e-12;
        match &self.kind {
            IntensityKind::UniformCap { axis, halfangle, height } => {
                if angle_raw(axis.as_vec(), y) <= halfangle + RIM {
                    *height
                } else {
                    0.0
                }
            }
            IntensityKind::SmoothBump {
                axis,
                halfangle,
                width,
                base,
                peak,
            } => {
                let d = angle_raw(axis.as_vec(), y);
                if d <= halfangle + RIM {
                    base + (peak - base) * (-(d * d) / (width * width)).exp()
                } else {
                    0.0
                }
            }
            IntensityKind::CapIndicator {
                axis,
                halfangle,
                height,
                mollify,
            } => {
                let d = angle_raw(axis.as_vec(), y);
                if *mollify > 0.0 {
                    height * smooth_step((halfangle - d) / mollify)
                } else if d <= halfangle + RIM {
                    *height
                } else {
                    0.0
                }
            }
            IntensityKind::Lifted(r) => {
                if y.z <= MIN_ELEVATION {
                    return 0.0;
                }
                let (px, py) = (PLANE_HEIGHT * y.x / y.z, PLANE_HEIGHT * y.y / y.z);
                let v = r.eval(px, py);
                if v == 0.0 {
                    0.0
                } else {
                    v * lift_factor(px, py)
                }
            }
            IntensityKind::Power { base, alpha } => base.eval(y).powf(*alpha),
        }
    }

    /// Axis and angular radius of a cap containing the support.
    pub fn support_cap(&self) -> (UnitVector, f64) {
        match &self.kind {
            IntensityKind::UniformCap { axis, halfangle, .. } | IntensityKind::SmoothBump { axis, halfangle, .. } => {
                (*axis, *halfangle)
            }
            IntensityKind::CapIndicator {
                axis,
                halfangle,
                mollify,
                ..
            } => (*axis, halfangle + mollify),
            IntensityKind::Lifted(r) => (UnitVector::e_z(), (r.half_width * 2f64.sqrt() / PLANE_HEIGHT).atan()),
            IntensityKind::Power { base, .. } => base.support_cap(),
        }
    }

    /// Upper bound of the density.
    pub fn max_value(&self) -> f64 {
        let raw = match &self.kind {
            IntensityKind::UniformCap { height, .. } => *height,
            IntensityKind::SmoothBump { base, peak, .. } => base.max(*peak),
            IntensityKind::CapIndicator { height, .. } => *height,
            IntensityKind::Lifted(r) => r.max_value() * lift_factor(r.half_width, r.half_width),
            IntensityKind::Power { base, alpha } => base.max_value().powf(*alpha),
        };
        self.scale * raw
    }

    /// Total mass on the sphere.
    pub fn total_mass(&self) -> Result<f64> {
        let m = match &self.kind {
            IntensityKind::UniformCap { halfangle, height, .. }
            | IntensityKind::CapIndicator {
                halfangle,
                height,
                mollify: 0.0,
                ..
            } => self.scale * height * std::f64::consts::TAU * (1.0 - halfangle.cos()),
            _ => self.numeric_mass()?,
        };
        if !(m > MIN_MASS) {
            return Err(Error::ZeroMass(m));
        }
        Ok(m)
    }

    fn numeric_mass(&self) -> Result<f64> {
        match &self.kind {
            IntensityKind::Lifted(r) => return Ok(self.scale * r.plane_mass()),
            IntensityKind::Power { base, alpha } => {
                if let IntensityKind::Lifted(r) = &base.kind {
                    let bs = base.scale;
                    let m = r.plane_integral(|x, y, v| {
                        let l = lift_factor(x, y);
                        (bs * v * l).powf(*alpha) / l
                    });
                    return Ok(self.scale * m);
                }
            }
            _ => {}
        }
        let (axis, radius) = self.support_cap();
        let mesh = CapMesh::build(radius, 64, GeometryOrder::Quadratic, axis)?;
        let rule = triangle_rule(6);
        let mut total = 0.0;
        for t in 0..mesh.n_triangles() {
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let cp = mesh.chart(t, p[0], p[1]);
                total += w * cp.area_factor() * self.eval(&cp.x);
            }
        }
        Ok(total)
    }

    /// Copy rescaled to the given total mass.
    pub fn normalized(&self, mass: f64) -> Result<Intensity> {
        let m = self.total_mass()?;
        Ok(Intensity {
            kind: self.kind.clone(),
            scale: self.scale * mass / m,
        })
    }

    pub fn contains(&self, y: &Vec3) -> bool {
        self.eval(y) > 0.0
    }

    /// Independent samples with density proportional to the intensity.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<UnitVector>> {
        self.total_mass()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (axis, radius) = self.support_cap();
        let (e1, e2) = tangent_frame(&axis);
        let a = *axis.as_vec();
        let draw_cap = |rng: &mut ChaCha8Rng| {
            let z = 1.0 - rng.gen::<f64>() * (1.0 - radius.cos());
            let phi = std::f64::consts::TAU * rng.gen::<f64>();
            let r = (1.0 - z * z).max(0.0).sqrt();
            let v = a * z + (e1 * phi.cos() + e2 * phi.sin()) * r;
            v / v.norm()
        };
        let mut out = Vec::with_capacity(count);
        if let IntensityKind::UniformCap { .. } = self.kind {
            for _ in 0..count {
                out.push(UnitVector::new_unchecked(draw_cap(&mut rng)));
            }
            return Ok(out);
        }
        let envelope = self.max_value();
        let mut trials: u64 = 0;
        while out.len() < count {
            let y = draw_cap(&mut rng);
            trials += 1;
            if rng.gen::<f64>() * envelope < self.eval(&y) {
                out.push(UnitVector::new_unchecked(y));
            }
            if trials >= 1_000_000 && (out.len() as f64) < 1e-4 * trials as f64 {
                return Err(Error::RejectionStall(out.len() as f64 / trials as f64));
            }
        }
        Ok(out)
    }
}

/// Boundary of the target region.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetBoundary {
    CapCircle { axis: UnitVector, halfangle: f64 },
    /// Closed polygon of geodesic segments.
    Polyline { points: Vec<UnitVector> },
}

fn closest_on_segment(y: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let n = a.cross(b);
    let nn = n.norm();
    if nn > 1e-15 {
        let n = n / nn;
        let p = y - n * n.dot(y);
        let pn = p.norm();
        if pn > 1e-15 {
            let p = p / pn;
            if a.cross(&p).dot(&n) >= 0.0 && p.cross(b).dot(&n) >= 0.0 {
                return p;
            }
        }
    }
    if angle_raw(y, a) <= angle_raw(y, b) {
        *a
    } else {
        *b
    }
}

impl TargetBoundary {
    pub fn polyline(points: Vec<UnitVector>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidParameter("polyline needs at least 3 points".into()));
        }
        for i in 0..points.len() {
            let j = (i + 1) % points.len();
            if geodesic_distance(&points[i], &points[j]) < 1e-12 {
                return Err(Error::InvalidParameter(format!("polyline points {i} and {j} coincide")));
            }
        }
        Ok(TargetBoundary::Polyline { points })
    }

    /// The square `[-a, a]^2` of the plane `z = 0.5` seen from the origin.
    pub fn plane_square(half_width: f64) -> Self {
        let a = half_width;
        TargetBoundary::Polyline {
            points: vec![from_plane(a, a), from_plane(-a, a), from_plane(-a, -a), from_plane(a, -a)],
        }
    }

    /// Closest point of the boundary.
    pub fn project(&self, y: &Vec3) -> Vec3 {
        match self {
            TargetBoundary::CapCircle { axis, halfangle } => {
                let (e1, _) = tangent_frame(axis);
                project_cap_raw(y, axis.as_vec(), *halfangle, &e1)
            }
            TargetBoundary::Polyline { points } => {
                let mut best = *points[0].as_vec();
                let mut dbest = f64::INFINITY;
                for i in 0..points.len() {
                    let j = (i + 1) % points.len();
                    let p = closest_on_segment(y, points[i].as_vec(), points[j].as_vec());
                    let d = angle_raw(y, &p);
                    if d < dbest {
                        dbest = d;
                        best = p;
                    }
                }
                best
            }
        }
    }

    pub fn project_to_boundary(&self, y: &UnitVector) -> UnitVector {
        UnitVector::new_unchecked(self.project(y.as_vec()))
    }

    /// Geodesic distance to the boundary; signed (negative inside) for caps.
    pub fn distance(&self, y: &UnitVector) -> f64 {
        match self {
            TargetBoundary::CapCircle { axis, halfangle } => signed_distance_to_cap_boundary(y, axis, *halfangle),
            TargetBoundary::Polyline { .. } => angle_raw(y.as_vec(), &self.project(y.as_vec())),
        }
    }
}

/// Reads a grayscale image as a planar density on `[-a, a]^2`.
///
/// Pixel values are scaled to `[0, 1]`; values at or below `threshold` are
/// replaced by `floor`, which defaults to `1e-3` times the largest value.
pub fn raster_from_image(path: &Path, half_width: f64, threshold: f64, floor: Option<f64>) -> Result<PlaneRaster> {
    raster_from_gray(&read_pgm(path)?, half_width, threshold, floor)
}

pub fn raster_from_gray(img: &GrayImage, half_width: f64, threshold: f64, floor: Option<f64>) -> Result<PlaneRaster> {
    if !(half_width > 0.0) {
        return Err(Error::InvalidParameter(format!("raster half width {half_width} must be positive")));
    }
    let scale = 1.0 / img.maxval as f64;
    let raw: Vec<f64> = img.pixels.iter().map(|&p| p as f64 * scale).collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    let floor = floor.unwrap_or(1e-3 * max);
    if floor < 0.0 {
        return Err(Error::InvalidParameter("density floor must be nonnegative".into()));
    }
    let values: Vec<f64> = raw.iter().map(|&v| if v <= threshold { floor } else { v }).collect();
    if values.iter().all(|&v| v <= 0.0) {
        return Err(Error::EmptySupport);
    }
    if floor > 0.0 {
        info!("raster density floor {floor:e} applied below threshold {threshold}");
    }
    Ok(PlaneRaster {
        width: img.width,
        height: img.height,
        values,
        half_width,
    })
}

/// Central projection of a planar density to the sphere.
pub fn stereographic_lift(raster: PlaneRaster) -> Intensity {
    Intensity::lifted(raster)
}

/// Planar density at a point, zero for points the plane does not see.
pub fn plane_density(raster: &PlaneRaster, y: &UnitVector) -> f64 {
    match to_plane(y) {
        Some((px, py)) => raster.eval(px, py),
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, TAU};

    fn source() -> Intensity {
        Intensity::uniform_cap(-UnitVector::e_z(), FRAC_PI_4, 1.0)
    }

    fn q() -> UnitVector {
        UnitVector::from_xyz(0.0, -FRAC_PI_8.sin(), FRAC_PI_8.cos()).unwrap()
    }

    #[test]
    fn source_values() {
        let f = source();
        assert_eq!(f.eval(&-Vec3::z()), 1.0);
        assert_eq!(f.eval(&Vec3::z()), 0.0);
        assert_relative_eq!(f.total_mass().unwrap(), 1.8403, epsilon = 1e-4);
    }

    #[test]
    fn off_axis_indicator() {
        let g = Intensity::cap_indicator(q(), FRAC_PI_4);
        assert_eq!(g.eval_unit(&q()), 1.0);
        // a point with y.q = cos(pi/4) - 0.01
        let (e1, _) = tangent_frame(&q());
        let c = FRAC_PI_4.cos() - 0.01;
        let y = q().as_vec() * c + e1 * (1.0 - c * c).sqrt();
        assert_eq!(g.eval(&y), 0.0);
        assert_relative_eq!(g.total_mass().unwrap(), source().total_mass().unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn bump_contrast() {
        let g = Intensity::smooth_bump(UnitVector::e_z(), FRAC_PI_4, 0.3, 1.0, 12.0);
        let top = g.eval(&Vec3::z());
        let rim = g.eval(&Vec3::new(FRAC_PI_4.sin(), 0.0, FRAC_PI_4.cos()));
        assert_relative_eq!(top / rim, 12.0, max_relative = 0.015);
        assert_eq!(g.eval(&Vec3::new(0.8, 0.0, 0.6)), 0.0);
    }

    #[test]
    fn normalization() {
        let g = Intensity::smooth_bump(UnitVector::e_z(), FRAC_PI_4, 0.3, 1.0, 12.0);
        let n = g.normalized(1.0).unwrap();
        assert_relative_eq!(n.total_mass().unwrap(), 1.0, epsilon = 1e-10);
        let nn = n.normalized(1.0).unwrap();
        assert_relative_eq!(nn.scale, n.scale, max_relative = 1e-12);
        // analytic mass agrees with quadrature
        let m = CapMesh::build(FRAC_PI_4, 40, GeometryOrder::Quadratic, UnitVector::e_z()).unwrap();
        assert_relative_eq!(m.statistics().total_area, source().total_mass().unwrap(), epsilon = 1e-6);
    }

    #[test]
    fn zero_mass_is_rejected() {
        let g = Intensity::uniform_cap(UnitVector::e_z(), 0.3, 0.0);
        assert!(matches!(g.total_mass(), Err(Error::ZeroMass(_))));
    }

    #[test]
    fn uniform_cap_sampling_mean() {
        let theta = 0.7;
        let f = Intensity::uniform_cap(-UnitVector::e_z(), theta, 1.0);
        let n = 1_000_000;
        let s = f.sample(n, 7).unwrap();
        let c: Vec<f64> = s.iter().map(|y| -y.as_vec().z).collect();
        let mean = c.iter().sum::<f64>() / n as f64;
        // cos of the polar angle is uniform on [cos theta, 1]
        let exact = (1.0 + theta.cos()) / 2.0;
        let sd = (1.0 - theta.cos()) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * sd, "{mean} vs {exact}");
        assert!(s.iter().all(|y| f.contains(y.as_vec())));
        assert_eq!(s[..10], f.sample(10, 7).unwrap()[..]);
    }

    // Probability of each of 4 x 4 (polar, azimuth) bins around the axis by
    // tensor Gauss quadrature of the density in spherical coordinates.
    fn bin_probabilities(g: &Intensity, axis: &UnitVector, radius: f64) -> Vec<f64> {
        let (e1, e2) = tangent_frame(axis);
        let (x, w) = gauss_legendre(12);
        let mut p = vec![0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                let (a0, a1) = (radius * i as f64 / 4.0, radius * (i + 1) as f64 / 4.0);
                let (b0, b1) = (TAU * j as f64 / 4.0, TAU * (j + 1) as f64 / 4.0);
                for (s, ws) in x.iter().zip(&w) {
                    for (t, wt) in x.iter().zip(&w) {
                        let a = a0 + (a1 - a0) * s;
                        let b = b0 + (b1 - b0) * t;
                        let y = axis.as_vec() * a.cos() + (e1 * b.cos() + e2 * b.sin()) * a.sin();
                        p[i * 4 + j] += ws * wt * (a1 - a0) * (b1 - b0) * a.sin() * g.eval(&y);
                    }
                }
            }
        }
        let total: f64 = p.iter().sum();
        p.iter().map(|v| v / total).collect()
    }

    fn chi_square(g: &Intensity, axis: UnitVector, radius: f64) -> f64 {
        let n = 100_000;
        let probs = bin_probabilities(g, &axis, radius);
        let (e1, e2) = tangent_frame(&axis);
        let mut counts = vec![0.0; 16];
        for y in g.sample(n, 11).unwrap() {
            let a = geodesic_distance(&y, &axis);
            let b = y.as_vec().dot(&e2).atan2(y.as_vec().dot(&e1)).rem_euclid(TAU);
            let i = ((a / radius * 4.0) as usize).min(3);
            let j = ((b / TAU * 4.0) as usize).min(3);
            counts[i * 4 + j] += 1.0;
        }
        counts.iter().zip(&probs).map(|(c, p)| (c - n as f64 * p).powi(2) / (n as f64 * p)).sum()
    }

    #[test]
    fn rejection_sampling_matches_density() {
        // 99.9% quantile of chi-square with 15 degrees of freedom
        let critical = 37.70;
        let bump = Intensity::smooth_bump(UnitVector::e_z(), FRAC_PI_4, 0.3, 1.0, 12.0);
        assert!(chi_square(&bump, UnitVector::e_z(), FRAC_PI_4) < critical);
        let smooth = Intensity::new(IntensityKind::CapIndicator {
            axis: q(),
            halfangle: 0.6,
            height: 2.0,
            mollify: 0.1,
        });
        assert!(chi_square(&smooth, q(), 0.7) < critical);
    }

    #[test]
    fn stalled_rejection_is_reported() {
        let mut values = vec![0.0; 100 * 100];
        values[0] = 1.0;
        let r = PlaneRaster {
            width: 100,
            height: 100,
            values,
            half_width: 0.5,
        };
        let g = Intensity::lifted(r);
        assert!(matches!(g.sample(1000, 1), Err(Error::RejectionStall(_))));
    }

    fn gray(w: usize, h: usize, v: u16) -> GrayImage {
        let mut img = GrayImage::new(w, h, 255);
        img.pixels.iter_mut().for_each(|p| *p = v);
        img
    }

    #[test]
    fn white_image_is_uniform() {
        let r = raster_from_gray(&gray(8, 8, 255), 0.4, 0.5, None).unwrap();
        for (x, y) in [(0.0, 0.0), (0.39, -0.2), (-0.4, 0.4)] {
            assert_relative_eq!(r.eval(x, y), 1.0);
        }
        assert_eq!(r.eval(0.41, 0.0), 0.0);
        assert_relative_eq!(r.plane_mass(), 0.64, epsilon = 1e-12);
    }

    #[test]
    fn black_image_has_empty_support() {
        assert!(matches!(
            raster_from_gray(&gray(8, 8, 0), 0.4, 0.5, Some(0.0)),
            Err(Error::EmptySupport)
        ));
        assert!(matches!(raster_from_gray(&gray(8, 8, 0), 0.4, 0.5, None), Err(Error::EmptySupport)));
    }

    #[test]
    fn missing_image_is_io_error() {
        assert!(matches!(
            raster_from_image(Path::new("/nonexistent/a.pgm"), 0.4, 0.5, None),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn lifted_letter_mass_is_preserved() {
        let img = crate::problems::letter_a_image(96);
        let r = raster_from_gray(&img, 0.35, 0.5, None).unwrap();
        let plane = r.plane_mass();
        let g = stereographic_lift(r);
        let (axis, radius) = g.support_cap();
        let mesh = CapMesh::build(radius, 128, GeometryOrder::Quadratic, axis).unwrap();
        let rule = triangle_rule(6);
        let mut lifted = 0.0;
        for t in 0..mesh.n_triangles() {
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let cp = mesh.chart(t, p[0], p[1]);
                lifted += w * cp.area_factor() * g.eval(&cp.x);
            }
        }
        assert_relative_eq!(lifted, plane, max_relative = 1e-2);
        assert_relative_eq!(g.total_mass().unwrap(), plane, max_relative = 1e-12);
    }

    #[test]
    fn lifted_disk_maps_back_into_disk() {
        let mut img = GrayImage::new(64, 64, 255);
        for r in 0..64 {
            for c in 0..64 {
                let (x, y) = (c as f64 - 31.5, r as f64 - 31.5);
                if x * x + y * y < 20.0 * 20.0 {
                    img.set(r, c, 255);
                }
            }
        }
        let raster = raster_from_gray(&img, 0.3, 0.5, Some(0.0)).unwrap();
        let g = stereographic_lift(raster);
        let radius = 0.3 * 21.0 / 32.0;
        for y in g.sample(2000, 3).unwrap() {
            let (px, py) = to_plane(&y).unwrap();
            assert!(px.hypot(py) < radius);
        }
    }

    #[test]
    fn boundary_projection() {
        let b = TargetBoundary::CapCircle {
            axis: q(),
            halfangle: FRAC_PI_4,
        };
        let p = b.project_to_boundary(&UnitVector::e_z());
        assert!(b.distance(&p).abs() < 1e-14);
        let sq = TargetBoundary::plane_square(0.4);
        let p = sq.project_to_boundary(&from_plane(0.1, 0.05));
        let (px, py) = to_plane(&p).unwrap();
        assert_relative_eq!(px, 0.4, epsilon = 1e-12);
        assert!(py.abs() <= 0.4);
        let corner = sq.project_to_boundary(&from_plane(0.6, 0.7));
        let (cx, cy) = to_plane(&corner).unwrap();
        assert_relative_eq!(cx, 0.4, epsilon = 1e-12);
        assert_relative_eq!(cy, 0.4, epsilon = 1e-12);
        assert!(TargetBoundary::polyline(vec![q(), q(), -q()]).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_intensity() -> impl Strategy<Value = Intensity> {
        let axis = (-1.0f64..1.0, 0.0..std::f64::consts::TAU).prop_map(|(z, phi)| {
            let r = (1.0 - z * z).sqrt();
            UnitVector::from_xyz(r * phi.cos(), r * phi.sin(), z).unwrap()
        });
        (axis, 0.2f64..1.2, 0usize..3, 0.1f64..0.6, 1.0f64..20.0).prop_map(|(axis, halfangle, kind, width, peak)| {
            match kind {
                0 => Intensity::uniform_cap(axis, halfangle, peak),
                1 => Intensity::cap_indicator(axis, halfangle),
                _ => Intensity::smooth_bump(axis, halfangle, width, 1.0, peak),
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn densities_are_nonnegative_and_vanish_off_support(g in arb_intensity(), z in -1.0f64..1.0, phi in 0.0f64..6.3) {
            let r = (1.0 - z * z).sqrt();
            let y = Vec3::new(r * phi.cos(), r * phi.sin(), z);
            let v = g.eval(&y);
            prop_assert!(v >= 0.0);
            let (axis, radius) = g.support_cap();
            if y.dot(axis.as_vec()) < radius.cos() - 1e-9 {
                prop_assert_eq!(v, 0.0);
            }
        }

        #[test]
        fn samples_lie_in_the_support(g in arb_intensity(), seed in 0u64..1000) {
            for y in g.sample(200, seed).unwrap() {
                prop_assert!(g.eval_unit(&y) > 0.0);
            }
        }

        #[test]
        fn normalization_is_idempotent(g in arb_intensity(), m in 0.1f64..10.0) {
            let once = g.normalized(m).unwrap();
            let twice = once.normalized(m).unwrap();
            prop_assert!((once.total_mass().unwrap() - m).abs() < 1e-10 * m);
            prop_assert!((twice.scale - once.scale).abs() < 1e-12 * once.scale);
        }
    }
}
