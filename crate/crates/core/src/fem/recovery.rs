//! Mixed `L2` recovery of the ambient Jacobian of a vector field.

use rayon::prelude::*;

use super::linsolve::{solve_spd, CgOptions};
use super::space::FeSpace;
use super::sparse::CsrMatrix;
use crate::error::Result;
use crate::sphere::{Mat3, Vec3};

/// Finds `sigma` in the tensor-valued finite element space with
/// `<sigma, chi> = -<div chi, T> + <T, chi nu>_boundary` for every test
/// tensor `chi`. `t` holds the nodal values of the field.
pub fn recover_sigma(space: &FeSpace, mass: &CsrMatrix, t: &[Vec3], opts: &CgOptions) -> Result<Vec<Mat3>> {
    let n = space.n_dofs();
    let nq = space.n_qp();
    let w = space.qp_weights();
    let mut rhs = vec![Mat3::zeros(); n];
    for e in 0..space.n_elements() {
        let dofs = space.element_dofs(e);
        for q in 0..nq {
            let vals = space.qp_basis(q);
            let tq = dofs.iter().zip(vals).fold(Vec3::zeros(), |acc, (&d, v)| acc + t[d] * *v);
            let wt = tq * w[e * nq + q];
            for (&d, g) in dofs.iter().zip(space.qp_basis_grads(e, q)) {
                rhs[d] -= wt * g.transpose();
            }
        }
    }
    for bp in space.boundary_points() {
        let dofs = space.element_dofs(bp.element);
        let tq = dofs.iter().zip(&bp.vals).fold(Vec3::zeros(), |acc, (&d, v)| acc + t[d] * *v);
        let tn = tq * bp.nu.transpose() * bp.w;
        for (&d, v) in dofs.iter().zip(&bp.vals) {
            if *v != 0.0 {
                rhs[d] += tn * *v;
            }
        }
    }
    let comps: Vec<Result<Vec<f64>>> = (0..9)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / 3, k % 3);
            let b: Vec<f64> = rhs.iter().map(|m| m[(i, j)]).collect();
            solve_spd(mass, &b, opts)
        })
        .collect();
    let mut sigma = vec![Mat3::zeros(); n];
    for (k, c) in comps.into_iter().enumerate() {
        let c = c?;
        let (i, j) = (k / 3, k % 3);
        for (s, v) in sigma.iter_mut().zip(c) {
            s[(i, j)] = v;
        }
    }
    Ok(sigma)
}

/// Interpolated tensor values at every quadrature point.
pub fn tensor_at_qp(space: &FeSpace, sigma: &[Mat3]) -> Vec<Mat3> {
    let nq = space.n_qp();
    let mut out = vec![Mat3::zeros(); space.n_elements() * nq];
    out.par_chunks_mut(nq).enumerate().for_each(|(e, chunk)| {
        let dofs = space.element_dofs(e);
        for (q, o) in chunk.iter_mut().enumerate() {
            *o = dofs.iter().zip(space.qp_basis(q)).fold(Mat3::zeros(), |acc, (&d, v)| acc + sigma[d] * *v);
        }
    });
    out
}

/// Interpolated vector values at every quadrature point.
pub fn vector_at_qp(space: &FeSpace, t: &[Vec3]) -> Vec<Vec3> {
    let nq = space.n_qp();
    let mut out = vec![Vec3::zeros(); space.n_elements() * nq];
    out.par_chunks_mut(nq).enumerate().for_each(|(e, chunk)| {
        let dofs = space.element_dofs(e);
        for (q, o) in chunk.iter_mut().enumerate() {
            *o = dofs.iter().zip(space.qp_basis(q)).fold(Vec3::zeros(), |acc, (&d, v)| acc + t[d] * *v);
        }
    });
    out
}
