//! Run configuration files (TOML).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use reflector_ot::fem::CgOptions;
use reflector_ot::intensity::{raster_from_image, stereographic_lift, IntensityKind};
use reflector_ot::problems::{letter_a_image, PlaneReflector};
use reflector_ot::raytrace::GridSpec;
use reflector_ot::solver::{InitialGuess, MeshSpec, StopMode};
use reflector_ot::{CostSign, GeometryOrder, Intensity, SolverConfig, TargetBoundary, UnitVector, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the ray sampler.
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default = "default_source")]
    pub source: IntensitySpec,
    pub target: IntensitySpec,
    /// Defaults to the rim of the target support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySpec>,
    #[serde(default)]
    pub linear: CgOptions,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub raytrace: RaytraceSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_solution: Option<ExactSolution>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Cap half-angle in radians.
    #[serde(default = "default_halfangle")]
    pub theta: f64,
    pub n: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_center")]
    pub center: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopModeName {
    #[default]
    ResidualIncrease,
    ResidualTol,
    MaxIterOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialName {
    #[default]
    Zero,
    PlaneReflector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// `-1` for `c = -log(1 - x.y)`, `+1` for `c = +log(1 - x.y)`.
    #[serde(default = "default_sign")]
    pub cost_sign: i32,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_degree")]
    pub fe_degree: usize,
    #[serde(default)]
    pub stop_mode: StopModeName,
    /// Used with `stop_mode = "residual_tol"`.
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_diagnostics")]
    pub diagnostics_every: usize,
    #[serde(default = "default_floor")]
    pub residual_floor: f64,
    #[serde(default)]
    pub cloud_refinement: usize,
    /// Exponents of the intermediate targets `g^alpha`.
    #[serde(default)]
    pub continuation: Vec<f64>,
    #[serde(default)]
    pub initial: InitialName,
    /// Mirror normal of the `plane_reflector` initial guess.
    #[serde(default = "default_normal")]
    pub initial_normal: [f64; 3],
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tau: default_tau(),
            cost_sign: default_sign(),
            max_iter: default_max_iter(),
            fe_degree: default_degree(),
            stop_mode: StopModeName::default(),
            residual_tol: default_residual_tol(),
            diagnostics_every: default_diagnostics(),
            residual_floor: default_floor(),
            cloud_refinement: 0,
            continuation: Vec::new(),
            initial: InitialName::default(),
            initial_normal: default_normal(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensitySpec {
    UniformCap {
        axis: [f64; 3],
        halfangle: f64,
        #[serde(default = "one")]
        height: f64,
    },
    CapIndicator {
        axis: [f64; 3],
        halfangle: f64,
        #[serde(default = "one")]
        height: f64,
        #[serde(default)]
        mollify: f64,
    },
    SmoothBump {
        axis: [f64; 3],
        halfangle: f64,
        width: f64,
        base: f64,
        peak: f64,
    },
    /// PGM raster on the square `[-half_width, half_width]^2` of the plane `z = 0.5`.
    Image {
        path: PathBuf,
        half_width: f64,
        #[serde(default = "half")]
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        floor: Option<f64>,
    },
    /// Built-in letter A raster.
    LetterA {
        #[serde(default = "default_letter_size")]
        size: usize,
        half_width: f64,
        #[serde(default = "half")]
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        floor: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    CapCircle { axis: [f64; 3], halfangle: f64 },
    Square { half_width: f64 },
    Polyline { points: Vec<[f64; 3]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub vtk: bool,
    #[serde(default = "yes")]
    pub obj: bool,
    #[serde(default = "yes")]
    pub csv: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            vtk: true,
            obj: true,
            csv: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSection {
    Sphere {
        axis: [f64; 3],
        max_polar: f64,
        n_polar: usize,
        n_azimuth: usize,
    },
    Plane {
        half_width: f64,
        nx: usize,
        ny: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaytraceSection {
    #[serde(default = "default_rays")]
    pub rays: usize,
    /// Gaussian smoothing radius in cells; 0 keeps the plain histogram.
    #[serde(default)]
    pub smoothing: f64,
    /// Defaults to a grid over the target support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    /// Reference image in the `image.csv` layout to compare against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

impl Default for RaytraceSection {
    fn default() -> Self {
        RaytraceSection {
            rays: default_rays(),
            smoothing: 0.0,
            grid: None,
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExactSolution {
    /// Plane mirror reflecting `-e_z` into `direction`.
    PlaneReflector { direction: [f64; 3] },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn default_halfangle() -> f64 {
    PI / 4.0
}
fn default_order() -> usize {
    2
}
fn default_center() -> [f64; 3] {
    [0.0, 0.0, -1.0]
}
fn default_normal() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn default_tau() -> f64 {
    0.5
}
fn default_sign() -> i32 {
    -1
}
fn default_max_iter() -> usize {
    100
}
fn default_degree() -> usize {
    2
}
fn default_residual_tol() -> f64 {
    1e-6
}
fn default_diagnostics() -> usize {
    1
}
fn default_floor() -> f64 {
    1e-12
}
fn default_letter_size() -> usize {
    128
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_rays() -> usize {
    1_000_000
}
fn default_source() -> IntensitySpec {
    IntensitySpec::UniformCap {
        axis: default_center(),
        halfangle: default_halfangle(),
        height: 1.0,
    }
}

fn unit(v: [f64; 3], what: &str) -> Result<UnitVector> {
    UnitVector::new(Vec3::from(v)).map_err(|e| ConfigError::Invalid(format!("{what}: {e}")))
}

impl IntensitySpec {
    /// `base` resolves relative image paths.
    pub fn build(&self, base: &Path) -> Result<Intensity> {
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{what} must be positive, got {x}")))
            }
        };
        Ok(match self {
            IntensitySpec::UniformCap { axis, halfangle, height } => {
                positive(*halfangle, "halfangle")?;
                positive(*height, "height")?;
                Intensity::uniform_cap(unit(*axis, "axis")?, *halfangle, *height)
            }
            IntensitySpec::CapIndicator {
                axis,
                halfangle,
                height,
                mollify,
            } => {
                positive(*halfangle, "halfangle")?;
                positive(*height, "height")?;
                if *mollify < 0.0 {
                    return Err(invalid("mollify must be nonnegative"));
                }
                Intensity::new(IntensityKind::CapIndicator {
                    axis: unit(*axis, "axis")?,
                    halfangle: *halfangle,
                    height: *height,
                    mollify: *mollify,
                })
            }
            IntensitySpec::SmoothBump {
                axis,
                halfangle,
                width,
                base,
                peak,
            } => {
                positive(*halfangle, "halfangle")?;
                positive(*width, "width")?;
                positive(*base, "base")?;
                positive(*peak, "peak")?;
                Intensity::smooth_bump(unit(*axis, "axis")?, *halfangle, *width, *base, *peak)
            }
            IntensitySpec::Image {
                path,
                half_width,
                threshold,
                floor,
            } => {
                positive(*half_width, "half_width")?;
                let path = base.join(path);
                let raster = raster_from_image(&path, *half_width, *threshold, *floor)
                    .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
                stereographic_lift(raster)
            }
            IntensitySpec::LetterA {
                size,
                half_width,
                threshold,
                floor,
            } => {
                positive(*half_width, "half_width")?;
                if *size < 8 {
                    return Err(invalid("letter size must be at least 8"));
                }
                let raster = reflector_ot::intensity::raster_from_gray(&letter_a_image(*size), *half_width, *threshold, *floor)
                    .map_err(invalid)?;
                stereographic_lift(raster)
            }
        })
    }

    fn default_boundary(&self) -> BoundarySpec {
        match self {
            IntensitySpec::UniformCap { axis, halfangle, .. } | IntensitySpec::SmoothBump { axis, halfangle, .. } => {
                BoundarySpec::CapCircle {
                    axis: *axis,
                    halfangle: *halfangle,
                }
            }
            IntensitySpec::CapIndicator {
                axis,
                halfangle,
                mollify,
                ..
            } => BoundarySpec::CapCircle {
                axis: *axis,
                halfangle: halfangle + mollify,
            },
            IntensitySpec::Image { half_width, .. } | IntensitySpec::LetterA { half_width, .. } => {
                BoundarySpec::Square {
                    half_width: *half_width,
                }
            }
        }
    }
}

impl BoundarySpec {
    pub fn build(&self) -> Result<TargetBoundary> {
        match self {
            BoundarySpec::CapCircle { axis, halfangle } => Ok(TargetBoundary::CapCircle {
                axis: unit(*axis, "boundary axis")?,
                halfangle: *halfangle,
            }),
            BoundarySpec::Square { half_width } => Ok(TargetBoundary::plane_square(*half_width)),
            BoundarySpec::Polyline { points } => {
                let pts = points
                    .iter()
                    .map(|p| unit(*p, "polyline point"))
                    .collect::<Result<Vec<_>>>()?;
                TargetBoundary::polyline(pts).map_err(invalid)
            }
        }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<GridSpec> {
        let spec = match self {
            GridSection::Sphere {
                axis,
                max_polar,
                n_polar,
                n_azimuth,
            } => GridSpec::Sphere {
                axis: unit(*axis, "grid axis")?,
                max_polar: *max_polar,
                n_polar: *n_polar,
                n_azimuth: *n_azimuth,
            },
            GridSection::Plane { half_width, nx, ny } => GridSpec::Plane {
                half_width: *half_width,
                nx: *nx,
                ny: *ny,
            },
        };
        spec.validate().map_err(invalid)?;
        Ok(spec)
    }
}

/// Everything a command needs, validated.
pub struct Resolved {
    pub solver: SolverConfig,
    pub grid: GridSpec,
    pub exact: Option<PlaneReflector>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cost_sign(&self) -> Result<CostSign> {
        CostSign::from_value(self.solver.cost_sign as f64).map_err(invalid)
    }

    /// Solver configuration with the mesh resolution replaced by `n`.
    pub fn resolve(&self, base: &Path, n: Option<usize>) -> Result<Resolved> {
        let m = &self.mesh;
        let n = n.unwrap_or(m.n);
        let order = GeometryOrder::from_int(m.order).map_err(invalid)?;
        if !(m.theta > 0.0 && m.theta < PI / 2.0) {
            return Err(invalid(format!("mesh theta must lie in (0, pi/2), got {}", m.theta)));
        }
        if n < 2 {
            return Err(invalid(format!("mesh n must be at least 2, got {n}")));
        }
        let mesh = MeshSpec {
            theta: m.theta,
            n,
            order,
            center: unit(m.center, "mesh center")?,
        };
        let s = &self.solver;
        let sign = self.cost_sign()?;
        let boundary = self
            .boundary
            .clone()
            .unwrap_or_else(|| self.target.default_boundary())
            .build()?;
        let mut cfg = SolverConfig::new(mesh, sign, self.source.build(base)?, self.target.build(base)?, boundary);
        cfg.tau = s.tau;
        cfg.max_iter = s.max_iter;
        cfg.fe_degree = s.fe_degree;
        cfg.stop_mode = match s.stop_mode {
            StopModeName::ResidualIncrease => StopMode::ResidualIncrease,
            StopModeName::ResidualTol => StopMode::ResidualTol(s.residual_tol),
            StopModeName::MaxIterOnly => StopMode::MaxIterOnly,
        };
        cfg.diagnostics_every = s.diagnostics_every;
        cfg.residual_floor = s.residual_floor;
        cfg.cloud_refinement = s.cloud_refinement;
        cfg.continuation = s.continuation.clone();
        cfg.linear = self.linear;
        cfg.u0 = match s.initial {
            InitialName::Zero => InitialGuess::Zero,
            InitialName::PlaneReflector => InitialGuess::PlaneReflector {
                normal: unit(s.initial_normal, "initial_normal")?.into_vec(),
            },
        };
        cfg.validate().map_err(invalid)?;
        if self.raytrace.rays == 0 {
            return Err(invalid("raytrace rays must be positive"));
        }
        if !(self.raytrace.smoothing >= 0.0) {
            return Err(invalid("raytrace smoothing must be nonnegative"));
        }
        let grid = match &self.raytrace.grid {
            Some(g) => g.build()?,
            None => self.default_grid(&cfg.target),
        };
        let exact = match &self.exact_solution {
            Some(ExactSolution::PlaneReflector { direction }) => Some(PlaneReflector::sending_down_axis_to(
                &unit(*direction, "exact_solution direction")?,
                sign,
            )),
            None => None,
        };
        if let Some(study) = &self.study {
            if study.n.is_empty() || study.n.iter().any(|&k| k < 2) {
                return Err(invalid("study n must be a nonempty list of sizes of at least 2"));
            }
        }
        Ok(Resolved {
            solver: cfg,
            grid,
            exact,
        })
    }

    fn default_grid(&self, target: &Intensity) -> GridSpec {
        match &self.target {
            IntensitySpec::Image { half_width, .. } | IntensitySpec::LetterA { half_width, .. } => GridSpec::Plane {
                half_width: *half_width,
                nx: 128,
                ny: 128,
            },
            _ => {
                let (axis, radius) = target.support_cap();
                GridSpec::Sphere {
                    axis,
                    max_polar: radius,
                    n_polar: 32,
                    n_azimuth: 32,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 7

[mesh]
n = 6

[solver]
cost_sign = 1
tau = 0.5
initial = "plane_reflector"

[target]
kind = "cap_indicator"
axis = [0.0, -0.3826834323650898, 0.9238795325112867]
halfangle = 0.7853981633974483

[exact_solution]
kind = "plane_reflector"
direction = [0.0, -0.3826834323650898, 0.9238795325112867]
"#;

    #[test]
    fn round_trip_is_lossless() {
        let cfg = RunConfig::from_toml(EXAMPLE).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.solver.cost_sign, 1);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            (format!("{EXAMPLE}\nbogus = 1\n"), "bogus"),
            (EXAMPLE.replace("tau = 0.5", "tau = 0.5\nstep = 2"), "step"),
            (EXAMPLE.replace("halfangle = 0.785", "radius = 1.0\nhalfangle = 0.785"), "radius"),
        ] {
            let err = RunConfig::from_toml(&text).unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn resolves_to_a_valid_solver_config() {
        let cfg = RunConfig::from_toml(EXAMPLE).unwrap();
        let r = cfg.resolve(Path::new("."), Some(4)).unwrap();
        assert_eq!(r.solver.mesh.n, 4);
        assert_eq!(r.solver.cost_sign, CostSign::PosLog);
        assert!(matches!(r.solver.target_boundary, TargetBoundary::CapCircle { .. }));
        assert!(matches!(r.grid, GridSpec::Sphere { n_polar: 32, .. }));
        assert!(r.exact.is_some());
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (from, to) in [("cost_sign = 1", "cost_sign = 2"), ("tau = 0.5", "tau = -1.0"), ("n = 6", "n = 0")] {
            let cfg = RunConfig::from_toml(&EXAMPLE.replace(from, to)).unwrap();
            assert!(cfg.resolve(Path::new("."), None).is_err(), "{to}");
        }
    }
}
