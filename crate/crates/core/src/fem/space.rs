use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{p1_basis, p2_basis, CapMesh, ChartPoint, LOCAL_EDGES, REF_NODES};
use crate::quadrature::{gauss_legendre, triangle_rule, TriangleRule};
use crate::sphere::{UnitVector, Vec3};

/// Points of a boundary edge used for line integrals.
#[derive(Clone, Debug)]
pub struct BoundaryPoint {
    pub element: usize,
    pub x: Vec3,
    /// Quadrature weight times arc-length element.
    pub w: f64,
    /// Outward unit conormal of the discrete boundary.
    pub nu: Vec3,
    /// Values of the element basis functions.
    pub vals: [f64; 6],
}

/// Lagrange finite elements of degree 1 or 2 on a curved cap mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: CapMesh,
    degree: usize,
    nb: usize,
    n_dofs: usize,
    elem_dofs: Vec<[usize; 6]>,
    dof_points: Vec<Vec3>,
    boundary_dofs: Vec<usize>,
    boundary_slot: Vec<usize>,
    rule: TriangleRule,
    ref_vals: Vec<[f64; 6]>,
    qp_x: Vec<Vec3>,
    qp_w: Vec<f64>,
    qp_grad: Vec<Vec3>,
    node_grads: Vec<Vec3>,
    dof_elems_start: Vec<usize>,
    dof_elems: Vec<(usize, usize)>,
    bpoints: Vec<BoundaryPoint>,
    bpoints_per_edge: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

fn ref_basis(degree: usize, xi: f64, eta: f64) -> ([f64; 6], [[f64; 2]; 6]) {
    if degree == 1 {
        let (v, g) = p1_basis(xi, eta);
        let mut vv = [0.0; 6];
        let mut gg = [[0.0; 2]; 6];
        vv[..3].copy_from_slice(&v);
        gg[..3].copy_from_slice(&g);
        (vv, gg)
    } else {
        p2_basis(xi, eta)
    }
}

fn surface_grads(cp: &ChartPoint, g: &[[f64; 2]; 6], nb: usize, element: usize) -> Result<[Vec3; 6]> {
    let a = cp.dual_basis().ok_or_else(|| Error::Assembly {
        element,
        reason: "singular chart Jacobian".into(),
    })?;
    let mut out = [Vec3::zeros(); 6];
    for b in 0..nb {
        out[b] = a[0] * g[b][0] + a[1] * g[b][1];
    }
    Ok(out)
}

impl FeSpace {
    pub fn new(mesh: CapMesh, degree: usize) -> Result<Self> {
        if degree != 1 && degree != 2 {
            return Err(Error::InvalidParameter(format!("element degree must be 1 or 2, got {degree}")));
        }
        let nb = if degree == 1 { 3 } else { 6 };
        let nc = mesh.n_corners();
        let n_dofs = if degree == 1 { nc } else { nc + mesh.n_edges() };
        let elem_dofs: Vec<[usize; 6]> = (0..mesh.n_triangles()).map(|t| mesh.element_nodes(t)).collect();
        let dof_points: Vec<Vec3> = mesh.all_nodes()[..n_dofs].iter().map(|x| *x.as_vec()).collect();

        let mut boundary_dofs: Vec<usize> = (0..n_dofs).filter(|&i| mesh.is_boundary_node(i)).collect();
        boundary_dofs.sort_unstable();
        let mut boundary_slot = vec![usize::MAX; n_dofs];
        for (k, &d) in boundary_dofs.iter().enumerate() {
            boundary_slot[d] = k;
        }

        let rule = triangle_rule(2 * degree + 2);
        let nq = rule.len();
        let ref_vals: Vec<[f64; 6]> = rule.points.iter().map(|p| ref_basis(degree, p[0], p[1]).0).collect();
        let ref_grads: Vec<[[f64; 2]; 6]> = rule.points.iter().map(|p| ref_basis(degree, p[0], p[1]).1).collect();

        struct ElemData {
            x: Vec<Vec3>,
            w: Vec<f64>,
            grad: Vec<Vec3>,
            node_grads: Vec<Vec3>,
        }
        let per_elem: Vec<Result<ElemData>> = (0..mesh.n_triangles())
            .into_par_iter()
            .map(|t| {
                let mut d = ElemData {
                    x: Vec::with_capacity(nq),
                    w: Vec::with_capacity(nq),
                    grad: Vec::with_capacity(nq * nb),
                    node_grads: Vec::with_capacity(nb * nb),
                };
                for (q, p) in rule.points.iter().enumerate() {
                    let cp = mesh.chart(t, p[0], p[1]);
                    let n = cp.jac[0].cross(&cp.jac[1]);
                    if n.dot(&cp.x) <= 0.0 {
                        return Err(Error::Assembly {
                            element: t,
                            reason: "inverted or degenerate element".into(),
                        });
                    }
                    d.x.push(cp.x);
                    d.w.push(rule.weights[q] * n.norm());
                    let g = surface_grads(&cp, &ref_grads[q], nb, t)?;
                    d.grad.extend_from_slice(&g[..nb]);
                }
                for node in REF_NODES.iter().take(nb) {
                    let cp = mesh.chart(t, node[0], node[1]);
                    let (_, rg) = ref_basis(degree, node[0], node[1]);
                    let g = surface_grads(&cp, &rg, nb, t)?;
                    d.node_grads.extend_from_slice(&g[..nb]);
                }
                Ok(d)
            })
            .collect();
        let mut qp_x = Vec::with_capacity(mesh.n_triangles() * nq);
        let mut qp_w = Vec::with_capacity(mesh.n_triangles() * nq);
        let mut qp_grad = Vec::with_capacity(mesh.n_triangles() * nq * nb);
        let mut node_grads = Vec::with_capacity(mesh.n_triangles() * nb * nb);
        for d in per_elem {
            let d = d?;
            qp_x.extend(d.x);
            qp_w.extend(d.w);
            qp_grad.extend(d.grad);
            node_grads.extend(d.node_grads);
        }

        let mut counts = vec![0usize; n_dofs + 1];
        for dofs in &elem_dofs {
            for &d in &dofs[..nb] {
                counts[d + 1] += 1;
            }
        }
        for i in 0..n_dofs {
            counts[i + 1] += counts[i];
        }
        let dof_elems_start = counts.clone();
        let mut fill = counts;
        let mut dof_elems = vec![(0, 0); dof_elems_start[n_dofs]];
        for (t, dofs) in elem_dofs.iter().enumerate() {
            for (l, &d) in dofs[..nb].iter().enumerate() {
                dof_elems[fill[d]] = (t, l);
                fill[d] += 1;
            }
        }

        let (gl_x, gl_w) = gauss_legendre(if degree == 1 { 4 } else { 5 });
        let mut bpoints = Vec::new();
        for be in mesh.boundary_edges() {
            let [a, b] = LOCAL_EDGES[be.local];
            let (pa, pb) = (REF_NODES[a], REF_NODES[b]);
            let dir = [pb[0] - pa[0], pb[1] - pa[1]];
            let center = mesh.chart(be.triangle, 1.0 / 3.0, 1.0 / 3.0).x;
            for (s, w) in gl_x.iter().zip(&gl_w) {
                let xi = pa[0] + s * dir[0];
                let eta = pa[1] + s * dir[1];
                let cp = mesh.chart(be.triangle, xi, eta);
                let dx = cp.jac[0] * dir[0] + cp.jac[1] * dir[1];
                let len = dx.norm();
                let mut nu = (dx / len).cross(&cp.x);
                if nu.dot(&(cp.x - center)) < 0.0 {
                    nu = -nu;
                }
                bpoints.push(BoundaryPoint {
                    element: be.triangle,
                    x: cp.x,
                    w: w * len,
                    nu,
                    vals: ref_basis(degree, xi, eta).0,
                });
            }
        }

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_dofs];
        for dofs in &elem_dofs {
            for &i in &dofs[..nb] {
                rows[i].extend_from_slice(&dofs[..nb]);
            }
        }
        let mut row_ptr = Vec::with_capacity(n_dofs + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }

        Ok(FeSpace {
            mesh,
            degree,
            nb,
            n_dofs,
            elem_dofs,
            dof_points,
            boundary_dofs,
            boundary_slot,
            rule,
            ref_vals,
            qp_x,
            qp_w,
            qp_grad,
            node_grads,
            dof_elems_start,
            dof_elems,
            bpoints,
            bpoints_per_edge: gl_x.len(),
            row_ptr,
            cols,
        })
    }

    pub fn mesh(&self) -> &CapMesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Basis functions per element.
    pub fn n_local(&self) -> usize {
        self.nb
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_elements(&self) -> usize {
        self.elem_dofs.len()
    }

    /// Quadrature points per element.
    pub fn n_qp(&self) -> usize {
        self.rule.len()
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        &self.elem_dofs[t][..self.nb]
    }

    pub fn dof_point(&self, i: usize) -> &Vec3 {
        &self.dof_points[i]
    }

    pub fn dof_points(&self) -> &[Vec3] {
        &self.dof_points
    }

    pub fn dof_unit(&self, i: usize) -> UnitVector {
        UnitVector::new_unchecked(self.dof_points[i])
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    /// Position of a dof in [`Self::boundary_dofs`].
    pub fn boundary_slot(&self, dof: usize) -> Option<usize> {
        self.boundary_slot.get(dof).copied().filter(|&s| s != usize::MAX)
    }

    pub fn qp_points(&self) -> &[Vec3] {
        &self.qp_x
    }

    pub fn qp_weights(&self) -> &[f64] {
        &self.qp_w
    }

    /// Reference basis values at quadrature point `q` of every element.
    pub fn qp_basis(&self, q: usize) -> &[f64] {
        &self.ref_vals[q][..self.nb]
    }

    /// Surface gradients of the local basis at quadrature point `q` of element `t`.
    pub fn qp_basis_grads(&self, t: usize, q: usize) -> &[Vec3] {
        let nq = self.rule.len();
        let s = (t * nq + q) * self.nb;
        &self.qp_grad[s..s + self.nb]
    }

    pub fn boundary_points(&self) -> &[BoundaryPoint] {
        &self.bpoints
    }

    pub fn boundary_points_per_edge(&self) -> usize {
        self.bpoints_per_edge
    }

    pub(crate) fn pattern(&self) -> (&[usize], &[usize]) {
        (&self.row_ptr, &self.cols)
    }

    pub fn interpolate(&self, f: impl Fn(&Vec3) -> f64 + Sync) -> Vec<f64> {
        self.dof_points.par_iter().map(|x| f(x)).collect()
    }

    /// Field values at every quadrature point, element by element.
    pub fn values_at_qp(&self, u: &[f64]) -> Vec<f64> {
        let nq = self.n_qp();
        let mut out = vec![0.0; self.n_elements() * nq];
        out.par_chunks_mut(nq).enumerate().for_each(|(t, chunk)| {
            let dofs = self.element_dofs(t);
            for (q, o) in chunk.iter_mut().enumerate() {
                let vals = self.qp_basis(q);
                *o = dofs.iter().zip(vals).map(|(&d, v)| u[d] * v).sum();
            }
        });
        out
    }

    pub fn grads_at_qp(&self, u: &[f64]) -> Vec<Vec3> {
        let nq = self.n_qp();
        let mut out = vec![Vec3::zeros(); self.n_elements() * nq];
        out.par_chunks_mut(nq).enumerate().for_each(|(t, chunk)| {
            let dofs = self.element_dofs(t);
            for (q, o) in chunk.iter_mut().enumerate() {
                let g = self.qp_basis_grads(t, q);
                *o = dofs.iter().zip(g).fold(Vec3::zeros(), |acc, (&d, gb)| acc + gb * u[d]);
            }
        });
        out
    }

    /// `b_a = sum_q w_q v_q phi_a(x_q)` for values given at every quadrature point.
    pub fn load_from_qp(&self, v: &[f64]) -> Vec<f64> {
        let nq = self.n_qp();
        let mut b = vec![0.0; self.n_dofs];
        for t in 0..self.n_elements() {
            let dofs = self.element_dofs(t);
            for q in 0..nq {
                let i = t * nq + q;
                let wv = self.qp_w[i] * v[i];
                for (&d, phi) in dofs.iter().zip(self.qp_basis(q)) {
                    b[d] += wv * phi;
                }
            }
        }
        b
    }

    pub fn integrate_qp(&self, v: &[f64]) -> f64 {
        self.qp_w.iter().zip(v).map(|(w, v)| w * v).sum()
    }

    pub fn integrate_fn(&self, f: impl Fn(&Vec3) -> f64) -> f64 {
        self.qp_x.iter().zip(&self.qp_w).map(|(x, w)| w * f(x)).sum()
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.integrate_qp(&self.values_at_qp(u))
    }

    pub fn area(&self) -> f64 {
        self.qp_w.iter().sum()
    }

    /// `L2` norm of `u - exact`.
    pub fn l2_error(&self, u: &[f64], exact: impl Fn(&Vec3) -> f64) -> f64 {
        let vals = self.values_at_qp(u);
        self.qp_x
            .iter()
            .zip(&self.qp_w)
            .zip(&vals)
            .map(|((x, w), v)| w * (v - exact(x)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `L2` norm of the surface gradient of `u` minus a tangential field.
    pub fn h1_seminorm_error(&self, u: &[f64], exact_grad: impl Fn(&Vec3) -> Vec3) -> f64 {
        let g = self.grads_at_qp(u);
        self.qp_x
            .iter()
            .zip(&self.qp_w)
            .zip(&g)
            .map(|((x, w), gv)| w * (gv - exact_grad(x)).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Surface gradient at each dof, averaged over the elements sharing it.
    pub fn dof_gradients(&self, u: &[f64]) -> Vec<Vec3> {
        let nb = self.nb;
        (0..self.n_dofs)
            .into_par_iter()
            .map(|i| {
                let list = &self.dof_elems[self.dof_elems_start[i]..self.dof_elems_start[i + 1]];
                let mut acc = Vec3::zeros();
                for &(t, l) in list {
                    let g = &self.node_grads[(t * nb + l) * nb..(t * nb + l + 1) * nb];
                    for (&d, gb) in self.element_dofs(t).iter().zip(g) {
                        acc += gb * u[d];
                    }
                }
                acc /= list.len() as f64;
                let x = &self.dof_points[i];
                acc - x * x.dot(&acc)
            })
            .collect()
    }

    /// Value of a field at a reference point of an element.
    pub fn eval_local(&self, u: &[f64], t: usize, xi: [f64; 2]) -> f64 {
        let (v, _) = ref_basis(self.degree, xi[0], xi[1]);
        self.element_dofs(t).iter().zip(v).map(|(&d, v)| u[d] * v).sum()
    }

    /// Surface gradient of a field at a reference point of an element.
    pub fn grad_local(&self, u: &[f64], t: usize, xi: [f64; 2]) -> Result<(Vec3, Vec3)> {
        let cp = self.mesh.chart(t, xi[0], xi[1]);
        let (_, g) = ref_basis(self.degree, xi[0], xi[1]);
        let sg = surface_grads(&cp, &g, self.nb, t)?;
        let grad = self.element_dofs(t).iter().zip(&sg).fold(Vec3::zeros(), |acc, (&d, gb)| acc + gb * u[d]);
        Ok((cp.x, grad))
    }

    /// Value of a field at a point of the cap, if the point is covered by the mesh.
    pub fn eval_at(&self, u: &[f64], y: &UnitVector) -> Option<f64> {
        let (t, xi) = self.mesh.locate(y)?;
        Some(self.eval_local(u, t, xi))
    }

    /// Boundary load `b_a = int phi_a (w . nu) ds` for a vector field sampled at
    /// boundary dofs (in the order of [`Self::boundary_dofs`]) and interpolated
    /// along each boundary edge.
    pub fn boundary_load(&self, w: &[Vec3]) -> Vec<f64> {
        let mut b = vec![0.0; self.n_dofs];
        for bp in &self.bpoints {
            let dofs = self.element_dofs(bp.element);
            let mut wq = Vec3::zeros();
            for (&d, v) in dofs.iter().zip(&bp.vals) {
                if *v != 0.0 {
                    if let Some(s) = self.boundary_slot(d) {
                        wq += w[s] * *v;
                    }
                }
            }
            let flux = bp.w * wq.dot(&bp.nu);
            for (&d, v) in dofs.iter().zip(&bp.vals) {
                b[d] += flux * v;
            }
        }
        b
    }

    /// Boundary load for a vector field given as a function of position.
    pub fn boundary_load_fn(&self, w: impl Fn(&Vec3, &Vec3) -> Vec3) -> Vec<f64> {
        let mut b = vec![0.0; self.n_dofs];
        for bp in &self.bpoints {
            let flux = bp.w * w(&bp.x, &bp.nu).dot(&bp.nu);
            for (&d, v) in self.element_dofs(bp.element).iter().zip(&bp.vals) {
                b[d] += flux * v;
            }
        }
        b
    }

    pub fn boundary_length(&self) -> f64 {
        self.bpoints.iter().map(|b| b.w).sum()
    }
}
