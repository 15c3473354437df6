//! Monte-Carlo validation of a reflector: push source samples through the
//! optical map, bin the hits and compare with the target density.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::intensity::Intensity;
use crate::quadrature::gauss_legendre;
use crate::sphere::{angle_raw, from_plane, lift_factor, reflect_raw, tangent_frame, CostSign, UnitVector, Vec3};

/// Image of the optical map applied to samples.
#[derive(Clone, Debug, Default)]
pub struct TraceResult {
    pub hits: Vec<UnitVector>,
    /// Samples the mesh could not locate.
    pub failed: usize,
}

/// Maps each sample through `T_u` using element-local gradients.
pub fn trace(space: &FeSpace, u: &[f64], s: CostSign, samples: &[UnitVector]) -> TraceResult {
    let sv = s.value();
    let out: Vec<Option<UnitVector>> = samples
        .par_iter()
        .map(|x| {
            let (t, xi) = space.mesh().locate(x)?;
            let (_, g) = space.grad_local(u, t, xi).ok()?;
            let xv = x.as_vec();
            let p = g - xv * xv.dot(&g);
            let y = reflect_raw(xv, &p, sv);
            Some(UnitVector::new_unchecked(y / y.norm()))
        })
        .collect();
    let failed = out.iter().filter(|h| h.is_none()).count();
    TraceResult {
        hits: out.into_iter().flatten().collect(),
        failed,
    }
}

/// Central projection of hits onto `z = 0.5`; hits too close to the horizon
/// are returned as the miss count.
pub fn to_plane(hits: &[UnitVector]) -> (Vec<(f64, f64)>, usize) {
    let mut pts = Vec::with_capacity(hits.len());
    let mut misses = 0;
    for h in hits {
        match crate::sphere::to_plane(h) {
            Some(p) => pts.push(p),
            None => misses += 1,
        }
    }
    (pts, misses)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GridSpec {
    /// `(polar angle, azimuth)` cells about `axis`; rows are polar bands.
    Sphere {
        axis: UnitVector,
        max_polar: f64,
        n_polar: usize,
        n_azimuth: usize,
    },
    /// Square `[-a, a]^2` of the plane `z = 0.5`; row 0 at `y = +a`.
    Plane { half_width: f64, nx: usize, ny: usize },
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            GridSpec::Sphere {
                max_polar,
                n_polar,
                n_azimuth,
                ..
            } => max_polar > 0.0 && max_polar <= PI && n_polar > 0 && n_azimuth > 0,
            GridSpec::Plane { half_width, nx, ny } => half_width > 0.0 && nx > 0 && ny > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad grid {self:?}")))
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            GridSpec::Sphere { n_polar, n_azimuth, .. } => (n_polar, n_azimuth),
            GridSpec::Plane { nx, ny, .. } => (ny, nx),
        }
    }

    pub fn len(&self) -> usize {
        let (r, c) = self.shape();
        r * c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Solid angle (sphere) or plane area (plane) of each cell.
    pub fn cell_areas(&self) -> Vec<f64> {
        match *self {
            GridSpec::Sphere {
                max_polar,
                n_polar,
                n_azimuth,
                ..
            } => {
                let dt = max_polar / n_polar as f64;
                let dp = 2.0 * PI / n_azimuth as f64;
                (0..n_polar)
                    .flat_map(|i| {
                        let a = dp * ((i as f64 * dt).cos() - ((i + 1) as f64 * dt).cos());
                        std::iter::repeat(a).take(n_azimuth)
                    })
                    .collect()
            }
            GridSpec::Plane { half_width, nx, ny } => {
                vec![4.0 * half_width * half_width / (nx * ny) as f64; nx * ny]
            }
        }
    }

    /// Cell index of a direction, or `None` outside the grid.
    pub fn cell_of(&self, y: &UnitVector) -> Option<usize> {
        match *self {
            GridSpec::Sphere {
                axis,
                max_polar,
                n_polar,
                n_azimuth,
            } => {
                let (e1, e2) = tangent_frame(&axis);
                let yv = y.as_vec();
                let polar = angle_raw(yv, axis.as_vec());
                if polar > max_polar {
                    return None;
                }
                let az = yv.dot(&e2).atan2(yv.dot(&e1)).rem_euclid(2.0 * PI);
                let i = ((polar / max_polar * n_polar as f64) as usize).min(n_polar - 1);
                let j = ((az / (2.0 * PI) * n_azimuth as f64) as usize).min(n_azimuth - 1);
                Some(i * n_azimuth + j)
            }
            GridSpec::Plane { .. } => {
                let (px, py) = crate::sphere::to_plane(y)?;
                self.plane_cell(px, py)
            }
        }
    }

    fn plane_cell(&self, px: f64, py: f64) -> Option<usize> {
        let GridSpec::Plane { half_width: a, nx, ny } = *self else {
            return None;
        };
        if px.abs() > a || py.abs() > a {
            return None;
        }
        let c = (((px + a) / (2.0 * a) * nx as f64) as usize).min(nx - 1);
        let r = (((a - py) / (2.0 * a) * ny as f64) as usize).min(ny - 1);
        Some(r * nx + c)
    }

    /// Cell averages of a density, per unit solid angle (sphere) or plane area.
    fn cell_averages(&self, density: impl Fn(&Vec3) -> f64 + Sync) -> Vec<f64> {
        let (gx, gw) = gauss_legendre(4);
        let areas = self.cell_areas();
        let (rows, cols) = self.shape();
        (0..rows * cols)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / cols, k % cols);
                let mut total = 0.0;
                match *self {
                    GridSpec::Sphere {
                        axis,
                        max_polar,
                        n_polar,
                        n_azimuth,
                    } => {
                        let (e1, e2) = tangent_frame(&axis);
                        let (dt, dp) = (max_polar / n_polar as f64, 2.0 * PI / n_azimuth as f64);
                        for (a, wa) in gx.iter().zip(&gw) {
                            for (b, wb) in gx.iter().zip(&gw) {
                                let th = (i as f64 + a) * dt;
                                let ph = (j as f64 + b) * dp;
                                let y = axis.as_vec() * th.cos() + (e1 * ph.cos() + e2 * ph.sin()) * th.sin();
                                total += wa * wb * dt * dp * th.sin() * density(&y);
                            }
                        }
                    }
                    GridSpec::Plane { half_width: h, nx, ny } => {
                        let (dx, dy) = (2.0 * h / nx as f64, 2.0 * h / ny as f64);
                        for (a, wa) in gx.iter().zip(&gw) {
                            for (b, wb) in gx.iter().zip(&gw) {
                                let px = -h + (j as f64 + a) * dx;
                                let py = h - (i as f64 + b) * dy;
                                let y = from_plane(px, py).into_vec();
                                total += wa * wb * dx * dy * density(&y) / lift_factor(px, py);
                            }
                        }
                    }
                }
                total / areas[k]
            })
            .collect()
    }
}

/// Density image on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridImage {
    pub spec: GridSpec,
    /// Row-major cell densities.
    pub values: Vec<f64>,
}

impl GridImage {
    pub fn mass(&self) -> f64 {
        self.values.iter().zip(self.spec.cell_areas()).map(|(v, a)| v * a).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Histogram of traced hits with its bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Binned {
    pub image: GridImage,
    pub total: usize,
    pub in_grid: usize,
    /// Hits outside the grid, including hits below the plane in plane mode.
    pub out_of_grid: usize,
    /// Samples that could not be traced.
    pub failed: usize,
}

impl Binned {
    pub fn in_grid_fraction(&self) -> f64 {
        self.in_grid as f64 / self.total as f64
    }

    pub fn miss_fraction(&self) -> f64 {
        (self.out_of_grid + self.failed) as f64 / self.total as f64
    }
}

fn gaussian_weights(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    (-r..=r).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect()
}

/// Mass-preserving separable Gaussian blur of per-cell masses.
fn smooth_masses(m: &[f64], rows: usize, cols: usize, sr: f64, sc: f64, periodic_cols: bool) -> Vec<f64> {
    let blur_axis = |m: &[f64], sigma: f64, along_rows: bool, periodic: bool| -> Vec<f64> {
        if sigma <= 0.0 {
            return m.to_vec();
        }
        let w = gaussian_weights(sigma);
        let r = (w.len() / 2) as i64;
        let (n, other) = if along_rows { (cols, rows) } else { (rows, cols) };
        let idx = |line: usize, k: usize| if along_rows { line * cols + k } else { k * cols + line };
        let mut out = vec![0.0; m.len()];
        for line in 0..other {
            for k in 0..n {
                let src = m[idx(line, k)];
                if src == 0.0 {
                    continue;
                }
                let mut targets = Vec::with_capacity(w.len());
                let mut norm = 0.0;
                for (o, wk) in (-r..=r).zip(&w) {
                    let mut t = k as i64 + o;
                    if periodic {
                        t = t.rem_euclid(n as i64);
                    } else if t < 0 || t >= n as i64 {
                        continue;
                    }
                    targets.push((t as usize, *wk));
                    norm += wk;
                }
                for (t, wk) in targets {
                    out[idx(line, t)] += src * wk / norm;
                }
            }
        }
        out
    };
    let m = blur_axis(m, sc, true, periodic_cols);
    blur_axis(&m, sr, false, false)
}

/// Histogram density estimate `count / (samples * cell area)`, optionally
/// blurred by a Gaussian of the given radius (radians or plane units).
pub fn bin(trace: &TraceResult, spec: &GridSpec, smoothing: f64) -> Result<Binned> {
    spec.validate()?;
    let (rows, cols) = spec.shape();
    let total = trace.hits.len() + trace.failed;
    if total == 0 {
        return Err(Error::InvalidParameter("no samples to bin".into()));
    }
    let cells: Vec<Option<usize>> = trace.hits.par_iter().map(|h| spec.cell_of(h)).collect();
    let mut counts = vec![0.0; rows * cols];
    let mut in_grid = 0;
    for c in cells.iter().flatten() {
        counts[*c] += 1.0;
        in_grid += 1;
    }
    if smoothing > 0.0 {
        let (sr, sc, periodic) = match *spec {
            GridSpec::Sphere {
                max_polar,
                n_polar,
                n_azimuth,
                ..
            } => {
                let dt = max_polar / n_polar as f64;
                let dp = 2.0 * PI / n_azimuth as f64 * max_polar.min(PI / 2.0).sin();
                (smoothing / dt, smoothing / dp, true)
            }
            GridSpec::Plane { half_width, nx, ny } => (
                smoothing * ny as f64 / (2.0 * half_width),
                smoothing * nx as f64 / (2.0 * half_width),
                false,
            ),
        };
        counts = smooth_masses(&counts, rows, cols, sr, sc, periodic);
    }
    let values = counts
        .iter()
        .zip(spec.cell_areas())
        .map(|(c, a)| c / (total as f64 * a))
        .collect();
    Ok(Binned {
        image: GridImage { spec: *spec, values },
        total,
        in_grid,
        out_of_grid: trace.hits.len() - in_grid,
        failed: trace.failed,
    })
}

/// Cell averages of `g / mass(g)` on the grid.
pub fn reference_image(target: &Intensity, spec: &GridSpec) -> Result<GridImage> {
    spec.validate()?;
    let mass = target.total_mass()?;
    let values = spec.cell_averages(|y| target.eval(y) / mass);
    Ok(GridImage { spec: *spec, values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMetrics {
    /// `sum |a - b| * area`.
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// Cell with the largest error, as `(row, column)`.
    pub argmax: (usize, usize),
    pub error_map: GridImage,
}

pub fn compare(image: &GridImage, reference: &GridImage) -> Result<ErrorMetrics> {
    if image.spec != reference.spec || image.values.len() != reference.values.len() {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", image.spec, reference.spec)));
    }
    let areas = image.spec.cell_areas();
    let err: Vec<f64> = image
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let l1 = err.iter().zip(&areas).map(|(e, a)| e * a).sum();
    let l2 = err.iter().zip(&areas).map(|(e, a)| e * e * a).sum::<f64>().sqrt();
    let (k, linf) = err
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (k, &e)| if e > best.1 { (k, e) } else { best });
    let cols = image.spec.shape().1;
    Ok(ErrorMetrics {
        l1,
        l2,
        linf,
        argmax: (k / cols, k % cols),
        error_map: GridImage {
            spec: image.spec,
            values: err,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{CapMesh, GeometryOrder};
    use std::f64::consts::FRAC_PI_4;

    fn space(n: usize) -> FeSpace {
        let mesh = CapMesh::build(FRAC_PI_4, n, GeometryOrder::Quadratic, -UnitVector::e_z()).unwrap();
        FeSpace::new(mesh, 2).unwrap()
    }

    fn cap_grid(n: usize) -> GridSpec {
        GridSpec::Sphere {
            axis: UnitVector::e_z(),
            max_polar: FRAC_PI_4,
            n_polar: n,
            n_azimuth: n,
        }
    }

    #[test]
    fn zero_potential_traces_to_antipodes() {
        let sp = space(6);
        let src = Intensity::uniform_cap(-UnitVector::e_z(), FRAC_PI_4, 1.0);
        let samples = src.sample(500, 3).unwrap();
        let tr = trace(&sp, &vec![0.0; sp.n_dofs()], CostSign::NegLog, &samples);
        assert_eq!(tr.failed, 0);
        for (x, y) in samples.iter().zip(&tr.hits) {
            assert!((x.as_vec() + y.as_vec()).norm() < 1e-12);
            assert!((y.as_vec().norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_is_deterministic() {
        let sp = space(6);
        let u = sp.interpolate(|x| 0.1 * x[0] * x[1]);
        let src = Intensity::uniform_cap(-UnitVector::e_z(), FRAC_PI_4, 1.0);
        let s1 = src.sample(2000, 9).unwrap();
        let s2 = src.sample(2000, 9).unwrap();
        let a = trace(&sp, &u, CostSign::NegLog, &s1);
        let b = trace(&sp, &u, CostSign::NegLog, &s2);
        assert_eq!(a.hits, b.hits);
    }

    #[test]
    fn plane_projection() {
        let (p, m) = to_plane(&[
            UnitVector::e_z(),
            UnitVector::from_xyz(FRAC_PI_4.sin(), 0.0, FRAC_PI_4.cos()).unwrap(),
            UnitVector::e_x(),
        ]);
        assert_eq!(m, 1);
        assert!(p[0].0.abs() < 1e-15 && p[0].1.abs() < 1e-15);
        assert!((p[1].0 - 0.5).abs() < 1e-12 && p[1].1.abs() < 1e-15);
    }

    #[test]
    fn sphere_cell_areas_sum_to_cap() {
        let a: f64 = cap_grid(17).cell_areas().iter().sum();
        assert!((a - 2.0 * PI * (1.0 - FRAC_PI_4.cos())).abs() < 1e-12);
    }

    #[test]
    fn uniform_hits_give_flat_image_and_conserve_mass() {
        let g = Intensity::uniform_cap(UnitVector::e_z(), FRAC_PI_4, 1.0);
        let n = 1_000_000;
        let tr = TraceResult {
            hits: g.sample(n, 4).unwrap(),
            failed: 0,
        };
        let spec = cap_grid(32);
        let b = bin(&tr, &spec, 0.0).unwrap();
        assert_eq!(b.in_grid + b.out_of_grid + b.failed, b.total);
        assert!((b.image.mass() - b.in_grid_fraction()).abs() < 1e-12);
        let areas = spec.cell_areas();
        let mass = 2.0 * PI * (1.0 - FRAC_PI_4.cos());
        for (v, a) in b.image.values.iter().zip(&areas) {
            let expected = n as f64 * a / mass;
            let count = v * n as f64 * a;
            assert!((count - expected).abs() < 5.0 * expected.sqrt(), "{count} vs {expected}");
        }
    }

    #[test]
    fn smoothing_preserves_mass() {
        let g = Intensity::smooth_bump(UnitVector::e_z(), FRAC_PI_4, 0.3, 1.0, 12.0);
        let tr = TraceResult {
            hits: g.sample(20000, 1).unwrap(),
            failed: 7,
        };
        for spec in [
            cap_grid(16),
            GridSpec::Plane {
                half_width: 0.4,
                nx: 20,
                ny: 10,
            },
        ] {
            let plain = bin(&tr, &spec, 0.0).unwrap();
            let smooth = bin(&tr, &spec, 0.05).unwrap();
            assert!((plain.image.mass() - smooth.image.mass()).abs() < 1e-12);
            assert!((plain.image.mass() + plain.miss_fraction() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_of_own_samples_matches_reference() {
        let g = Intensity::smooth_bump(UnitVector::e_z(), FRAC_PI_4, 0.3, 1.0, 12.0);
        let spec = cap_grid(32);
        let tr = TraceResult {
            hits: g.sample(1_000_000, 11).unwrap(),
            failed: 0,
        };
        let b = bin(&tr, &spec, 0.0).unwrap();
        let r = reference_image(&g, &spec).unwrap();
        assert!((r.mass() - 1.0).abs() < 1e-6, "{}", r.mass());
        let m = compare(&b.image, &r).unwrap();
        assert!(m.l1 < 0.05, "l1 {}", m.l1);
    }

    #[test]
    fn compare_identical_and_mismatched() {
        let g = Intensity::uniform_cap(UnitVector::e_z(), FRAC_PI_4, 1.0);
        let r = reference_image(&g, &cap_grid(8)).unwrap();
        let m = compare(&r, &r).unwrap();
        assert_eq!((m.l1, m.l2, m.linf), (0.0, 0.0, 0.0));
        let other = reference_image(&g, &cap_grid(9)).unwrap();
        assert!(matches!(compare(&r, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn plane_reference_of_lifted_raster_is_raster() {
        let raster = crate::intensity::PlaneRaster {
            width: 4,
            height: 4,
            values: vec![1.0; 16],
            half_width: 0.3,
        };
        let g = crate::intensity::stereographic_lift(raster);
        let spec = GridSpec::Plane {
            half_width: 0.3,
            nx: 6,
            ny: 6,
        };
        let r = reference_image(&g, &spec).unwrap();
        let lifted_mass = g.total_mass().unwrap();
        for v in &r.values {
            assert!((v * lifted_mass - 1.0).abs() < 1e-2);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::mesh::{CapMesh, GeometryOrder};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn binning_conserves_rays(
            a in -0.3f64..0.3,
            b in -0.3f64..0.3,
            plane in any::<bool>(),
            cells in 4usize..24,
            seed in 0u64..100,
        ) {
            let mesh = CapMesh::build(FRAC_PI_4, 4, GeometryOrder::Quadratic, -UnitVector::e_z()).unwrap();
            let space = FeSpace::new(mesh, 2).unwrap();
            let u = space.interpolate(|x| a * x.x + b * x.y * x.y);
            let samples = crate::Intensity::uniform_cap(-UnitVector::e_z(), FRAC_PI_4, 1.0).sample(2000, seed).unwrap();
            let t = trace(&space, &u, CostSign::NegLog, &samples);
            prop_assert!(t.hits.iter().all(|y| (y.as_vec().norm() - 1.0).abs() < 1e-12));
            let spec = if plane {
                GridSpec::Plane { half_width: 0.5, nx: cells, ny: cells }
            } else {
                GridSpec::Sphere { axis: UnitVector::e_z(), max_polar: FRAC_PI_4, n_polar: cells, n_azimuth: cells }
            };
            let binned = bin(&t, &spec, 0.0).unwrap();
            prop_assert_eq!(binned.in_grid + binned.out_of_grid + binned.failed, binned.total);
            prop_assert!((binned.image.mass() - binned.in_grid_fraction()).abs() < 1e-12);
        }
    }
}
