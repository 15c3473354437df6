//! Sobolev gradient descent on the reduced Kantorovich dual.
//!
//! Each iteration maps the current potential to the reflector map `T`,
//! recovers its ambient Jacobian `sigma` by a mixed `L2` projection, forms the
//! residual `r = g(T) J - theta f` of the Monge-Ampere type equation, projects
//! `T(boundary)` onto the target boundary to get Neumann data `h'`, and solves
//! `<grad u', grad v> = <grad u, grad v> + tau <r, v> + <(h' - h).nu, v>_boundary`
//! with `h` the Neumann trace of `u`.

mod dual;

use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dual::{CapTree, SourceCloud, TargetQuadrature};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, recover_sigma, solve_zero_mean, tensor_at_qp, vector_at_qp, CgOptions,
    CsrMatrix, FeSpace,
};
use crate::intensity::{Intensity, IntensityKind, TargetBoundary};
use crate::mesh::{CapMesh, GeometryOrder};
use crate::sphere::{inverse_raw, reflect_raw, CostSign, Mat3, UnitVector, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    /// Stop as soon as the residual norm fails to decrease.
    ResidualIncrease,
    /// Stop once the residual norm reaches the given value.
    ResidualTol(f64),
    MaxIterOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialGuess {
    Zero,
    /// Radial plane `rho = b / (x.n)` with `b` fixed by the zero-mean constraint.
    PlaneReflector { normal: Vec3 },
    /// Nodal values; the mean is removed.
    Values(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub theta: f64,
    pub n: usize,
    pub order: GeometryOrder,
    pub center: UnitVector,
}

impl MeshSpec {
    pub fn cap(theta: f64, n: usize) -> Self {
        MeshSpec {
            theta,
            n,
            order: GeometryOrder::Quadratic,
            center: -UnitVector::e_z(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub cost_sign: CostSign,
    pub max_iter: usize,
    pub fe_degree: usize,
    pub mesh: MeshSpec,
    pub source: Intensity,
    pub target: Intensity,
    pub target_boundary: TargetBoundary,
    pub stop_mode: StopMode,
    /// Evaluate the dual functional every this many iterations (0 = never).
    pub diagnostics_every: usize,
    pub u0: InitialGuess,
    /// Exponents `alpha` of intermediate targets `g^alpha`, solved in order.
    pub continuation: Vec<f64>,
    pub linear: CgOptions,
    /// Residual norms at or below this stop the iteration as converged.
    pub residual_floor: f64,
    /// Refinement of the source cloud used by the discrete c-transform.
    pub cloud_refinement: usize,
}

impl SolverConfig {
    pub fn new(
        mesh: MeshSpec,
        cost_sign: CostSign,
        source: Intensity,
        target: Intensity,
        target_boundary: TargetBoundary,
    ) -> Self {
        SolverConfig {
            tau: 0.5,
            cost_sign,
            max_iter: 100,
            fe_degree: 2,
            mesh,
            source,
            target,
            target_boundary,
            stop_mode: StopMode::ResidualIncrease,
            diagnostics_every: 5,
            u0: InitialGuess::Zero,
            continuation: Vec::new(),
            linear: CgOptions::default(),
            residual_floor: 1e-12,
            cloud_refinement: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {}", self.tau)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if self.fe_degree != 1 && self.fe_degree != 2 {
            return Err(Error::InvalidParameter(format!("element degree must be 1 or 2, got {}", self.fe_degree)));
        }
        if let Some(a) = self.continuation.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidParameter(format!("continuation exponent {a} outside (0, 1)")));
        }
        Ok(())
    }
}

/// Quantities derived from one potential.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Reflector map at the dofs.
    pub t: Vec<Vec3>,
    pub sigma: Vec<Mat3>,
    /// Orientation-corrected surface Jacobian at quadrature points.
    pub jac: Vec<f64>,
    /// `g(T) J` at quadrature points.
    pub gj: Vec<f64>,
    pub theta: f64,
    /// Residual at quadrature points.
    pub r: Vec<f64>,
    pub residual_norm: f64,
    /// `int r phi_a`.
    pub load: Vec<f64>,
    pub min_det: f64,
    pub negative_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct IterationState {
    pub k: usize,
    pub u: Vec<f64>,
    pub sigma: Vec<Mat3>,
    pub theta: f64,
    pub residual_norm: f64,
    /// Neumann data at the boundary dofs that produced `u`.
    pub h: Vec<Vec3>,
    pub dual_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub k: usize,
    pub residual: f64,
    pub theta: f64,
    pub dual_value: Option<f64>,
    pub min_det: f64,
    pub negative_fraction: f64,
    pub ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResidualIncrease,
    ResidualTolerance,
    Converged,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub rows: Vec<ReportRow>,
    pub termination: Termination,
    /// Number of Poisson steps taken.
    pub iterations: usize,
    /// Index of the returned iterate.
    pub returned_k: usize,
    pub warnings: Vec<String>,
    /// Reports of the intermediate continuation stages.
    pub stages: Vec<SolveReport>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.rows[self.returned_k].residual
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: Vec<f64>,
    pub report: SolveReport,
    pub state: IterationState,
}

/// Discretization and data of one reflector problem.
pub struct ReflectorSolver {
    config: SolverConfig,
    space: FeSpace,
    stiffness: CsrMatrix,
    mass: CsrMatrix,
    mass_ones: Vec<f64>,
    identity_det: Vec<f64>,
    target: Intensity,
    f_qp: Vec<f64>,
    f_integral: f64,
    cloud: std::sync::OnceLock<SourceCloud>,
    target_quadrature: std::sync::OnceLock<Result<TargetQuadrature, String>>,
}

impl ReflectorSolver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let mesh = CapMesh::build(config.mesh.theta, config.mesh.n, config.mesh.order, config.mesh.center)?;
        let space = FeSpace::new(mesh, config.fe_degree)?;
        let stiffness = assemble_stiffness(&space);
        let mass = assemble_mass(&space);
        let mass_ones = mass.apply(&vec![1.0; space.n_dofs()]);
        let positions: Vec<Vec3> = space.dof_points().to_vec();
        let sigma_id = tensor_at_qp(&space, &recover_sigma(&space, &mass, &positions, &config.linear)?);
        let identity_det: Vec<f64> = sigma_id
            .iter()
            .zip(space.qp_points())
            .map(|(s, x)| {
                let p = Mat3::identity() - x * x.transpose();
                (s * p + x * x.transpose()).determinant()
            })
            .collect();
        let source_mass = config.source.total_mass()?;
        let target = config.target.normalized(source_mass)?;
        let f_qp: Vec<f64> = space.qp_points().iter().map(|x| config.source.eval(x)).collect();
        let f_integral = space.integrate_qp(&f_qp);
        if !(f_integral > 0.0) {
            return Err(Error::ZeroMass(f_integral));
        }
        Ok(ReflectorSolver {
            config,
            space,
            stiffness,
            mass,
            mass_ones,
            identity_det,
            target,
            f_qp,
            f_integral,
            cloud: std::sync::OnceLock::new(),
            target_quadrature: std::sync::OnceLock::new(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Target density rescaled to the source mass.
    pub fn target(&self) -> &Intensity {
        &self.target
    }

    pub fn source_at_qp(&self) -> &[f64] {
        &self.f_qp
    }

    pub fn zero_mean(&self, u: &mut [f64]) {
        let area: f64 = self.mass_ones.iter().sum();
        let mean = u.iter().zip(&self.mass_ones).map(|(a, b)| a * b).sum::<f64>() / area;
        u.iter_mut().for_each(|v| *v -= mean);
    }

    pub fn initial_potential(&self) -> Vec<f64> {
        let mut u = match &self.config.u0 {
            InitialGuess::Zero => vec![0.0; self.space.n_dofs()],
            InitialGuess::PlaneReflector { normal } => {
                let s = self.config.cost_sign.value();
                self.space.interpolate(|x| -s * (-x.dot(normal)).max(1e-300).ln())
            }
            InitialGuess::Values(v) => v.clone(),
        };
        self.zero_mean(&mut u);
        u
    }

    /// Reflector map at the dofs from dof-averaged surface gradients.
    pub fn map_field(&self, u: &[f64]) -> Vec<Vec3> {
        let s = self.config.cost_sign.value();
        self.space
            .dof_gradients(u)
            .par_iter()
            .zip(self.space.dof_points())
            .map(|(p, x)| {
                let y = reflect_raw(x, p, s);
                y / y.norm()
            })
            .collect()
    }

    pub fn recover_sigma(&self, t: &[Vec3]) -> Result<Vec<Mat3>> {
        recover_sigma(&self.space, &self.mass, t, &self.config.linear)
    }

    /// Map, Jacobian, normalization and residual for a potential.
    pub fn evaluate(&self, u: &[f64]) -> Result<Evaluation> {
        let t = self.map_field(u);
        let sigma = self.recover_sigma(&t)?;
        let sq = tensor_at_qp(&self.space, &sigma);
        let tq = vector_at_qp(&self.space, &t);
        let xs = self.space.qp_points();
        let (jac, gj): (Vec<f64>, Vec<f64>) = (0..xs.len())
            .into_par_iter()
            .map(|i| {
                let x = &xs[i];
                let that = tq[i] / tq[i].norm();
                let p = Mat3::identity() - x * x.transpose();
                let raw = (sq[i] * p + that * x.transpose()).determinant();
                // reflector maps reverse orientation, so the raw determinant is negative
                let j = -raw / self.identity_det[i];
                (j, self.target.eval(&that) * j)
            })
            .unzip();
        let theta = self.space.integrate_qp(&gj) / self.f_integral;
        if !(theta > 0.0) {
            return Err(Error::NonpositiveTheta(theta));
        }
        let r: Vec<f64> = gj.iter().zip(&self.f_qp).map(|(a, f)| a - theta * f).collect();
        let residual_norm = self
            .space
            .qp_weights()
            .iter()
            .zip(&r)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt();
        let load = self.space.load_from_qp(&r);
        let min_det = jac.iter().copied().fold(f64::INFINITY, f64::min);
        let negative_fraction = jac.iter().filter(|j| **j <= 0.0).count() as f64 / jac.len() as f64;
        Ok(Evaluation {
            t,
            sigma,
            jac,
            gj,
            theta,
            r,
            residual_norm,
            load,
            min_det,
            negative_fraction,
        })
    }

    /// `L2` projection of the residual into the finite element space.
    pub fn residual_field(&self, ev: &Evaluation) -> Result<Vec<f64>> {
        crate::fem::solve_spd(&self.mass, &ev.load, &self.config.linear)
    }

    /// Neumann trace of a potential at the boundary dofs.
    pub fn neumann_trace(&self, u: &[f64]) -> Vec<Vec3> {
        let g = self.space.dof_gradients(u);
        self.space.boundary_dofs().iter().map(|&d| g[d]).collect()
    }

    /// Gradients at the boundary dofs that send each boundary point to the
    /// closest point of the target boundary.
    pub fn neumann_update(&self, t: &[Vec3]) -> Vec<Vec3> {
        let s = self.config.cost_sign.value();
        self.space
            .boundary_dofs()
            .iter()
            .map(|&d| {
                let p = self.config.target_boundary.project(&t[d]);
                inverse_raw(self.space.dof_point(d), &p, s)
            })
            .collect()
    }

    pub fn descent_step(&self, u: &[f64], load: &[f64], h_k: &[Vec3], h_next: &[Vec3]) -> Result<Vec<f64>> {
        let dh: Vec<Vec3> = h_next.iter().zip(h_k).map(|(a, b)| a - b).collect();
        let bl = self.space.boundary_load(&dh);
        let mut rhs = self.stiffness.apply(u);
        let tau = self.config.tau;
        for ((r, l), b) in rhs.iter_mut().zip(load).zip(&bl) {
            *r += tau * l + b;
        }
        solve_zero_mean(&self.stiffness, &rhs, &self.mass_ones, &self.config.linear)
    }

    pub fn source_cloud(&self) -> &SourceCloud {
        self.cloud.get_or_init(|| SourceCloud::new(&self.space, self.config.cloud_refinement))
    }

    pub fn target_quadrature(&self) -> Result<&TargetQuadrature> {
        let q = self.target_quadrature.get_or_init(|| {
            TargetQuadrature::new(&self.target, 4 * self.source_cloud().len()).map_err(|e| e.to_string())
        });
        q.as_ref().map_err(|e| Error::InvalidParameter(e.clone()))
    }

    /// Discrete c-transform of `u` at the given target points.
    pub fn c_transform(&self, u: &[f64], ys: &[Vec3]) -> Vec<f64> {
        let cloud = self.source_cloud();
        cloud.c_transform(&cloud.values(&self.space, u), self.config.cost_sign, ys)
    }

    /// `J(u) = int u f + int u^c g`.
    pub fn dual_value(&self, u: &[f64]) -> Result<f64> {
        let tq = self.target_quadrature()?;
        let uc = self.c_transform(u, &tq.points);
        let source = self.space.integrate_qp(
            &self
                .space
                .values_at_qp(u)
                .iter()
                .zip(&self.f_qp)
                .map(|(a, b)| a * b)
                .collect::<Vec<_>>(),
        );
        Ok(source + uc.iter().zip(&tq.weights).map(|(a, w)| a * w).sum::<f64>())
    }

    /// Runs the descent, including any continuation stages.
    pub fn run(&self) -> Result<Solution> {
        let mut u = self.initial_potential();
        let mut stages = Vec::new();
        for &alpha in &self.config.continuation {
            let mut cfg = self.config.clone();
            cfg.continuation.clear();
            cfg.target = Intensity::new(IntensityKind::Power {
                base: Box::new(self.target.clone()),
                alpha,
            });
            cfg.u0 = InitialGuess::Values(u.clone());
            let stage = ReflectorSolver::new(cfg)?;
            let sol = stage.run()?;
            u = sol.u;
            stages.push(sol.report);
        }
        let mut sol = self.run_from(u)?;
        sol.report.stages = stages;
        Ok(sol)
    }

    fn row(&self, k: usize, ev: &Evaluation, u: &[f64], started: Instant) -> Result<ReportRow> {
        let every = self.config.diagnostics_every;
        let dual_value = if every > 0 && k % every == 0 {
            Some(self.dual_value(u)?)
        } else {
            None
        };
        Ok(ReportRow {
            k,
            residual: ev.residual_norm,
            theta: ev.theta,
            dual_value,
            min_det: ev.min_det,
            negative_fraction: ev.negative_fraction,
            ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Runs the descent from a given starting potential.
    pub fn run_from(&self, mut u: Vec<f64>) -> Result<Solution> {
        self.zero_mean(&mut u);
        let started = Instant::now();
        let mut warnings = Vec::new();
        let mut ev = self.evaluate(&u).map_err(|e| e.at(0))?;
        let mut h = self.neumann_trace(&u);
        let mut rows = vec![self.row(0, &ev, &u, started).map_err(|e| e.at(0))?];
        let note = |k: usize, ev: &Evaluation, warnings: &mut Vec<String>| {
            if ev.negative_fraction > 0.0 {
                let msg = format!(
                    "iteration {k}: surface Jacobian nonpositive at {:.3}% of quadrature points (min {:.3e})",
                    100.0 * ev.negative_fraction,
                    ev.min_det
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        };
        note(0, &ev, &mut warnings);
        let mut termination = Termination::MaxIter;
        let mut returned_k = 0;
        let mut iterations = 0;
        if ev.residual_norm <= self.config.residual_floor {
            termination = Termination::Converged;
        } else {
            for k in 0..self.config.max_iter {
                let h_trace = self.neumann_trace(&u);
                let h_next = self.neumann_update(&ev.t);
                let u_next = self.descent_step(&u, &ev.load, &h_trace, &h_next).map_err(|e| e.at(k + 1))?;
                let ev_next = self.evaluate(&u_next).map_err(|e| e.at(k + 1))?;
                iterations = k + 1;
                rows.push(self.row(k + 1, &ev_next, &u_next, started).map_err(|e| e.at(k + 1))?);
                note(k + 1, &ev_next, &mut warnings);
                debug!("iteration {}: residual {:.6e} theta {:.6}", k + 1, ev_next.residual_norm, ev_next.theta);
                if self.config.stop_mode == StopMode::ResidualIncrease && ev_next.residual_norm >= ev.residual_norm {
                    termination = Termination::ResidualIncrease;
                    break;
                }
                u = u_next;
                ev = ev_next;
                h = h_next;
                returned_k = k + 1;
                if let StopMode::ResidualTol(tol) = self.config.stop_mode {
                    if ev.residual_norm <= tol {
                        termination = Termination::ResidualTolerance;
                        break;
                    }
                }
                if ev.residual_norm <= self.config.residual_floor {
                    termination = Termination::Converged;
                    break;
                }
            }
        }
        let state = IterationState {
            k: returned_k,
            u: u.clone(),
            sigma: ev.sigma.clone(),
            theta: ev.theta,
            residual_norm: ev.residual_norm,
            h,
            dual_value: rows[returned_k].dual_value,
        };
        Ok(Solution {
            u,
            report: SolveReport {
                rows,
                termination,
                iterations,
                returned_k,
                warnings,
                stages: Vec::new(),
            },
            state,
        })
    }

    /// Reflector map of the final potential at the boundary dofs.
    pub fn boundary_images(&self, u: &[f64]) -> Vec<UnitVector> {
        let t = self.map_field(u);
        self.space
            .boundary_dofs()
            .iter()
            .map(|&d| UnitVector::new_unchecked(t[d]))
            .collect()
    }
}

/// Runs a solve for the given configuration.
pub fn run(config: SolverConfig) -> Result<(Vec<f64>, SolveReport)> {
    let sol = ReflectorSolver::new(config)?.run()?;
    Ok((sol.u, sol.report))
}

/// Statistics of the orientation-corrected surface Jacobian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityStats {
    pub min_det: f64,
    pub negative_fraction: f64,
}

pub fn c_convexity_monitor(ev: &Evaluation) -> ConvexityStats {
    ConvexityStats {
        min_det: ev.min_det,
        negative_fraction: ev.negative_fraction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{antipodal_config, off_axis_config, smooth_bump_config};

    #[test]
    fn antipodal_problem_is_a_fixed_point() {
        let solver = ReflectorSolver::new(antipodal_config(8)).unwrap();
        let sol = solver.run().unwrap();
        assert!(sol.report.final_residual() < 1e-6);
        assert!(sol.report.iterations <= 2);
        assert!(sol.u.iter().all(|v| v.abs() < 1e-8));
        let ev = solver.evaluate(&sol.u).unwrap();
        let m = c_convexity_monitor(&ev);
        assert!((m.min_det - 1.0).abs() < 1e-9 && m.negative_fraction == 0.0);
    }

    #[test]
    fn one_step_from_the_optimum_stays_put() {
        let solver = ReflectorSolver::new(antipodal_config(8)).unwrap();
        let u = vec![0.0; solver.space().n_dofs()];
        let ev = solver.evaluate(&u).unwrap();
        let u1 = solver
            .descent_step(&u, &ev.load, &solver.neumann_trace(&u), &solver.neumann_update(&ev.t))
            .unwrap();
        assert!(u1.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8);
    }

    #[test]
    fn zero_residual_and_equal_data_give_the_same_potential() {
        let solver = ReflectorSolver::new(smooth_bump_config(6)).unwrap();
        let mut u = solver.space().interpolate(|x| 0.05 * x[0] + 0.02 * x[1] * x[1]);
        solver.zero_mean(&mut u);
        let h = solver.neumann_trace(&u);
        let u1 = solver.descent_step(&u, &vec![0.0; u.len()], &h, &h).unwrap();
        let diff = u.iter().zip(&u1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn theta_balances_the_masses() {
        let solver = ReflectorSolver::new(smooth_bump_config(8)).unwrap();
        let u = solver.space().interpolate(|x| 0.01 * (4.0 * (-x[2]).acos()).cos());
        let ev = solver.evaluate(&u).unwrap();
        let net = solver.space().integrate_qp(&ev.r);
        let f = solver.space().integrate_qp(solver.source_at_qp());
        assert!(net.abs() <= 1e-8 * f, "{net}");
    }

    #[test]
    fn dual_value_of_the_antipodal_problem() {
        let solver = ReflectorSolver::new(antipodal_config(8)).unwrap();
        let j = solver.dual_value(&vec![0.0; solver.space().n_dofs()]).unwrap();
        let mass = 2.0 * std::f64::consts::PI * (1.0 - std::f64::consts::FRAC_PI_4.cos());
        assert!((j - 2f64.ln() * mass).abs() < 1e-3 * mass, "{j}");
    }

    #[test]
    fn iterates_have_zero_mean_and_decreasing_residuals() {
        let mut cfg = off_axis_config(6, CostSign::PosLog);
        cfg.max_iter = 8;
        cfg.stop_mode = StopMode::MaxIterOnly;
        cfg.diagnostics_every = 0;
        let solver = ReflectorSolver::new(cfg).unwrap();
        let sol = solver.run().unwrap();
        assert_eq!(sol.report.iterations, 8);
        assert!(solver.space().integrate(&sol.u).abs() < 1e-10);
        assert!(sol.report.final_residual() < sol.report.rows[0].residual);

        let mut cfg = smooth_bump_config(6);
        cfg.tau = 0.15;
        cfg.max_iter = 30;
        let sol = ReflectorSolver::new(cfg).unwrap().run().unwrap();
        let res = sol.report.residuals();
        let kept = &res[..=sol.report.returned_k];
        assert!(kept.windows(2).all(|w| w[1] < w[0]));
        if sol.report.termination == Termination::ResidualIncrease {
            assert!(res[res.len() - 1] >= res[res.len() - 2]);
        }
    }

    #[test]
    fn huge_steps_are_flagged() {
        let mut cfg = off_axis_config(6, CostSign::PosLog);
        cfg.tau = 50.0;
        let solver = ReflectorSolver::new(cfg).unwrap();
        let u = solver.initial_potential();
        let ev = solver.evaluate(&u).unwrap();
        let u1 = solver
            .descent_step(&u, &ev.load, &solver.neumann_trace(&u), &solver.neumann_update(&ev.t))
            .unwrap();
        match solver.evaluate(&u1) {
            Ok(ev1) => assert!(c_convexity_monitor(&ev1).negative_fraction > 0.0),
            Err(e) => assert!(matches!(e, Error::NonpositiveTheta(_))),
        }
    }

    #[test]
    fn bad_configurations_are_rejected() {
        let mut cfg = antipodal_config(4);
        cfg.tau = 0.0;
        assert!(matches!(ReflectorSolver::new(cfg), Err(Error::InvalidParameter(_))));
        let mut cfg = antipodal_config(4);
        cfg.fe_degree = 3;
        assert!(matches!(ReflectorSolver::new(cfg), Err(Error::InvalidParameter(_))));
        let mut cfg = antipodal_config(4);
        cfg.continuation = vec![1.5];
        assert!(matches!(ReflectorSolver::new(cfg), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn continuation_stages_are_reported() {
        let mut cfg = smooth_bump_config(5);
        cfg.tau = 0.15;
        cfg.max_iter = 5;
        cfg.continuation = vec![0.5];
        cfg.diagnostics_every = 0;
        let sol = ReflectorSolver::new(cfg).unwrap().run().unwrap();
        assert_eq!(sol.report.stages.len(), 1);
        assert!(sol.report.final_residual().is_finite());
    }
}
