//! Preconditioned conjugate gradients for the stiffness and mass systems.

use serde::{Deserialize, Serialize};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    #[default]
    Jacobi,
    IncompleteCholesky,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgOptions {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Iteration cap; `None` means ten times the number of unknowns.
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub preconditioner: Preconditioner,
}

fn default_tol() -> f64 {
    1e-10
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: default_tol(),
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Ic(IncompleteCholesky),
}

impl Precond {
    fn new(a: &CsrMatrix, kind: Preconditioner) -> Self {
        match kind {
            Preconditioner::Jacobi => Precond::Jacobi(
                a.diagonal()
                    .iter()
                    .map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 })
                    .collect(),
            ),
            Preconditioner::IncompleteCholesky => Precond::Ic(IncompleteCholesky::new(a)),
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Jacobi(d) => {
                for ((z, r), d) in z.iter_mut().zip(r).zip(d) {
                    *z = r * d;
                }
            }
            Precond::Ic(ic) => ic.solve(r, z),
        }
    }
}

/// Zero-fill incomplete Cholesky factor `L L^T` of an SPD (or semidefinite)
/// matrix, with a diagonal shift added until the factorization succeeds.
struct IncompleteCholesky {
    // lower triangle by rows, diagonal last in each row
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl IncompleteCholesky {
    fn new(a: &CsrMatrix) -> Self {
        let mut shift = 0.0;
        loop {
            if let Some(f) = Self::try_factor(a, shift) {
                return f;
            }
            shift = if shift == 0.0 { 1e-3 } else { shift * 4.0 };
        }
    }

    fn try_factor(a: &CsrMatrix, shift: f64) -> Option<Self> {
        let n = a.n();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if j <= i {
                    cols.push(j);
                    vals.push(if j == i { x * (1.0 + shift) } else { x });
                }
            }
            row_ptr.push(cols.len());
        }
        for i in 0..n {
            let (ri0, ri1) = (row_ptr[i], row_ptr[i + 1]);
            for p in ri0..ri1 {
                let j = cols[p];
                // l_ij = (a_ij - sum_k l_ik l_jk) / l_jj over the shared pattern
                let (rj0, rj1) = (row_ptr[j], row_ptr[j + 1]);
                let (mut a_, mut b_) = (ri0, rj0);
                let mut s = 0.0;
                while a_ < p && b_ < rj1 - 1 {
                    match cols[a_].cmp(&cols[b_]) {
                        std::cmp::Ordering::Less => a_ += 1,
                        std::cmp::Ordering::Greater => b_ += 1,
                        std::cmp::Ordering::Equal => {
                            s += vals[a_] * vals[b_];
                            a_ += 1;
                            b_ += 1;
                        }
                    }
                }
                if j == i {
                    let d = vals[p] - s;
                    if !(d > 0.0) {
                        return None;
                    }
                    vals[p] = d.sqrt();
                } else {
                    vals[p] = (vals[p] - s) / vals[rj1 - 1];
                }
            }
        }
        Some(IncompleteCholesky { row_ptr, cols, vals })
    }

    fn solve(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = r[i];
            for p in s..e - 1 {
                acc -= self.vals[p] * z[self.cols[p]];
            }
            z[i] = acc / self.vals[e - 1];
        }
        for i in (0..n).rev() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            z[i] /= self.vals[e - 1];
            let zi = z[i];
            for p in s..e - 1 {
                z[self.cols[p]] -= self.vals[p] * zi;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for `A x = b` starting from `x`. `project` is applied to
/// every iterate (used to remove a null-space component).
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    opts: &CgOptions,
    project: Option<&dyn Fn(&mut [f64])>,
) -> Result<CgStats> {
    let n = a.n();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let pre = Precond::new(a, opts.preconditioner);
    if let Some(p) = project {
        p(x);
    }
    let mut r = a.apply(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / bnorm;
    for it in 0..=max_iter {
        if res <= opts.tol {
            return Ok(CgStats {
                iterations: it,
                residual: res,
            });
        }
        if it == max_iter {
            break;
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if let Some(pr) = project {
            pr(x);
        }
        res = dot(&r, &r).sqrt() / bnorm;
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

/// Solves the singular Neumann system `K u = rhs` on the complement of the
/// constants. `mass_ones` is `M 1`; the right-hand side is made compatible by
/// removing its mean and the returned field has zero weighted mean.
pub fn solve_zero_mean(k: &CsrMatrix, rhs: &[f64], mass_ones: &[f64], opts: &CgOptions) -> Result<Vec<f64>> {
    let area: f64 = mass_ones.iter().sum();
    let c = rhs.iter().sum::<f64>() / area;
    let b: Vec<f64> = rhs.iter().zip(mass_ones).map(|(r, m)| r - c * m).collect();
    let project = |x: &mut [f64]| {
        let mean = dot(mass_ones, x) / area;
        x.iter_mut().for_each(|v| *v -= mean);
    };
    let mut x = vec![0.0; rhs.len()];
    pcg(k, &b, &mut x, opts, Some(&project))?;
    project(&mut x);
    Ok(x)
}

/// Solves `M x = b` for an SPD matrix.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: &CgOptions) -> Result<Vec<f64>> {
    let mut x = vec![0.0; b.len()];
    pcg(a, b, &mut x, opts, None)?;
    Ok(x)
}
