//! Discrete c-transform and the reduced dual functional.

use rayon::prelude::*;

use crate::error::Result;
use crate::fem::FeSpace;
use crate::intensity::Intensity;
use crate::mesh::{p1_basis, p2_basis, CapMesh, GeometryOrder};
use crate::quadrature::triangle_rule;
use crate::sphere::{angle_raw, CostSign, Vec3, SINGULAR_GAP};

const LEAF: usize = 16;

#[derive(Clone, Debug)]
struct Node {
    center: Vec3,
    radius: f64,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Bounding-cap hierarchy over a point cloud on the sphere.
#[derive(Clone, Debug)]
pub struct CapTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl CapTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, points.len(), &mut nodes);
        }
        CapTree { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Per-node maxima of `-u`, for a potential given at the cloud points.
    fn node_max(&self, u: &[f64]) -> Vec<f64> {
        let mut m = vec![f64::NEG_INFINITY; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            let n = &self.nodes[i];
            m[i] = match n.children {
                Some((a, b)) => m[a].max(m[b]),
                None => self.order[n.start..n.end].iter().map(|&k| -u[k]).fold(f64::NEG_INFINITY, f64::max),
            };
        }
        m
    }

    /// `max_i (-c(x_i, y) - u_i)` with the maximizing index (lowest on ties).
    fn max_at(&self, u: &[f64], node_max: &[f64], s: f64, y: &Vec3) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        if !self.nodes.is_empty() {
            self.visit(0, u, node_max, s, y, &mut best);
        }
        best
    }

    fn bound(&self, i: usize, node_max: &[f64], s: f64, y: &Vec3) -> f64 {
        let n = &self.nodes[i];
        let d = angle_raw(&n.center, y);
        let gap = |a: f64| (2.0 * (0.5 * a).sin().powi(2)).max(SINGULAR_GAP);
        let c = if s < 0.0 {
            gap((d + n.radius).min(std::f64::consts::PI)).ln()
        } else {
            let a = d - n.radius;
            if a <= 0.0 {
                return f64::INFINITY;
            }
            -gap(a).ln()
        };
        c + node_max[i]
    }

    fn visit(&self, i: usize, u: &[f64], node_max: &[f64], s: f64, y: &Vec3, best: &mut (f64, usize)) {
        let n = &self.nodes[i];
        match n.children {
            None => {
                for &k in &self.order[n.start..n.end] {
                    let gap = (1.0 - self.points[k].dot(y)).max(SINGULAR_GAP);
                    let v = -s * gap.ln() - u[k];
                    if v > best.0 || (v == best.0 && k < best.1) {
                        *best = (v, k);
                    }
                }
            }
            Some((a, b)) => {
                let ba = self.bound(a, node_max, s, y);
                let bb = self.bound(b, node_max, s, y);
                let (first, second, b1, b2) = if ba >= bb { (a, b, ba, bb) } else { (b, a, bb, ba) };
                let slack = |v: f64| v + 1e-12 * (1.0 + v.abs());
                if slack(b1) >= best.0 {
                    self.visit(first, u, node_max, s, y, best);
                }
                if slack(b2) >= best.0 {
                    self.visit(second, u, node_max, s, y, best);
                }
            }
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let idx = &mut order[start..end];
    let mut sum = Vec3::zeros();
    for &k in idx.iter() {
        sum += points[k];
    }
    let center = if sum.norm() > 1e-12 { sum.normalize() } else { points[idx[0]] };
    let radius = idx.iter().map(|&k| angle_raw(&center, &points[k])).fold(0.0, f64::max) * (1.0 + 1e-12) + 1e-15;
    let id = nodes.len();
    nodes.push(Node {
        center,
        radius,
        start,
        end,
        children: None,
    });
    if end - start > LEAF {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &k in idx.iter() {
            lo = lo.inf(&points[k]);
            hi = hi.sup(&points[k]);
        }
        let axis = (hi - lo).imax();
        idx.sort_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let a = build(points, order, start, mid, nodes);
        let b = build(points, order, mid, end, nodes);
        nodes[id].children = Some((a, b));
    }
    id
}

/// Point cloud of the source domain on which potentials are maximized.
#[derive(Clone, Debug)]
pub struct SourceCloud {
    tree: CapTree,
    refinement: usize,
    /// For refined clouds: element and local basis values of each point.
    lattice: Vec<(usize, [f64; 6])>,
}

impl SourceCloud {
    /// Dof points (`refinement = 0`) or the points `(i/m, j/m)` of every element
    /// with `m = refinement + degree`.
    pub fn new(space: &FeSpace, refinement: usize) -> Self {
        if refinement == 0 {
            return SourceCloud {
                tree: CapTree::new(space.dof_points().to_vec()),
                refinement,
                lattice: Vec::new(),
            };
        }
        let m = refinement + space.degree();
        let mut pts = Vec::new();
        let mut lattice = Vec::new();
        for t in 0..space.n_elements() {
            for i in 0..=m {
                for j in 0..=(m - i) {
                    let (xi, eta) = (i as f64 / m as f64, j as f64 / m as f64);
                    let mut vals = [0.0; 6];
                    if space.degree() == 1 {
                        vals[..3].copy_from_slice(&p1_basis(xi, eta).0);
                    } else {
                        vals = p2_basis(xi, eta).0;
                    }
                    pts.push(space.mesh().chart(t, xi, eta).x);
                    lattice.push((t, vals));
                }
            }
        }
        SourceCloud {
            tree: CapTree::new(pts),
            refinement,
            lattice,
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }

    /// Potential values at the cloud points.
    pub fn values(&self, space: &FeSpace, u: &[f64]) -> Vec<f64> {
        if self.refinement == 0 {
            return u.to_vec();
        }
        self.lattice
            .iter()
            .map(|(t, vals)| space.element_dofs(*t).iter().zip(vals).map(|(&d, v)| u[d] * v).sum())
            .collect()
    }

    /// `u^c(y) = max_x (-c(x, y) - u(x))` over the cloud, for each `y`.
    pub fn c_transform(&self, u_cloud: &[f64], s: CostSign, ys: &[Vec3]) -> Vec<f64> {
        self.c_transform_argmax(u_cloud, s, ys).into_iter().map(|(v, _)| v).collect()
    }

    pub fn c_transform_argmax(&self, u_cloud: &[f64], s: CostSign, ys: &[Vec3]) -> Vec<(f64, usize)> {
        let nm = self.tree.node_max(u_cloud);
        let sv = s.value();
        ys.par_iter().map(|y| self.tree.max_at(u_cloud, &nm, sv, y)).collect()
    }
}

/// Fixed quadrature of the target density: points and weights `w_j g(y_j)`.
#[derive(Clone, Debug)]
pub struct TargetQuadrature {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl TargetQuadrature {
    /// Three-point rule on a cap mesh covering the support, with at least
    /// `min_points` nodes before zero-density points are dropped.
    pub fn new(target: &Intensity, min_points: usize) -> Result<Self> {
        let (axis, radius) = target.support_cap();
        let n = (((min_points as f64) / 18.0).sqrt().ceil() as usize).max(8);
        let mesh = CapMesh::build(radius, n, GeometryOrder::Quadratic, axis)?;
        let rule = triangle_rule(2);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for t in 0..mesh.n_triangles() {
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let cp = mesh.chart(t, p[0], p[1]);
                let g = target.eval(&cp.x);
                if g > 0.0 {
                    points.push(cp.x);
                    weights.push(w * cp.area_factor() * g);
                }
            }
        }
        Ok(TargetQuadrature { points, weights })
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}
