//! Structured curved triangulations of spherical caps.
//!
//! A flat disk of radius `theta` is split into `n` rings; ring `j` carries
//! `6 j` vertices at equal azimuths and neighbouring rings are zipped
//! together by triangles. The disk is carried onto the sphere by the
//! exponential map at the cap center. Elements are curved: a point with
//! reference coordinates `xi` is `F(xi) / |F(xi)|`, where `F` is the linear
//! or quadratic interpolant through the element's geometric nodes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::triangle_rule;
use crate::sphere::{angle_raw, exp_raw, log_raw, project_cap_raw, tangent_frame, TangentVector, UnitVector, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeometryOrder {
    Linear = 1,
    Quadratic = 2,
}

impl GeometryOrder {
    pub fn from_int(k: usize) -> Result<Self> {
        match k {
            1 => Ok(GeometryOrder::Linear),
            2 => Ok(GeometryOrder::Quadratic),
            _ => Err(Error::InvalidParameter(format!("geometry order must be 1 or 2, got {k}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub triangle: usize,
    /// Local edge index: 0 = (0,1), 1 = (1,2), 2 = (2,0).
    pub local: usize,
}

/// Reference coordinates of the six element nodes: corners, then the
/// midpoints of local edges (0,1), (1,2), (2,0).
pub const REF_NODES: [[f64; 2]; 6] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];

pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

#[derive(Clone, Debug)]
pub struct CapMesh {
    pub theta: f64,
    pub n: usize,
    pub order: GeometryOrder,
    pub center: UnitVector,
    frame: (Vec3, Vec3),
    /// Corner vertices followed by one node per edge.
    nodes: Vec<UnitVector>,
    n_corners: usize,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    boundary_node: Vec<bool>,
    locator: Locator,
}

#[derive(Clone, Debug)]
pub struct MeshStatistics {
    pub h: f64,
    pub min_area: f64,
    pub max_area: f64,
    pub total_area: f64,
}

/// Quadratic Lagrange basis on the reference triangle and its gradient.
pub fn p2_basis(xi: f64, eta: f64) -> ([f64; 6], [[f64; 2]; 6]) {
    let l0 = 1.0 - xi - eta;
    let (l1, l2) = (xi, eta);
    let v = [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ];
    let g = [
        [-(4.0 * l0 - 1.0), -(4.0 * l0 - 1.0)],
        [4.0 * l1 - 1.0, 0.0],
        [0.0, 4.0 * l2 - 1.0],
        [4.0 * (l0 - l1), -4.0 * l1],
        [4.0 * l2, 4.0 * l1],
        [-4.0 * l2, 4.0 * (l0 - l2)],
    ];
    (v, g)
}

pub fn p1_basis(xi: f64, eta: f64) -> ([f64; 3], [[f64; 2]; 3]) {
    ([1.0 - xi - eta, xi, eta], [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
}

/// Point and tangent Jacobian of a curved element at a reference point.
#[derive(Clone, Copy, Debug)]
pub struct ChartPoint {
    pub x: Vec3,
    /// Columns `dx/dxi`, `dx/deta`.
    pub jac: [Vec3; 2],
}

impl ChartPoint {
    pub fn area_factor(&self) -> f64 {
        self.jac[0].cross(&self.jac[1]).norm()
    }

    /// Metric-dual vectors `a_k` with `grad_S phi = sum_k a_k d_k phi`.
    pub fn dual_basis(&self) -> Option<[Vec3; 2]> {
        let (j0, j1) = (&self.jac[0], &self.jac[1]);
        let g00 = j0.dot(j0);
        let g01 = j0.dot(j1);
        let g11 = j1.dot(j1);
        let det = g00 * g11 - g01 * g01;
        if !(det > 1e-300) {
            return None;
        }
        let inv = 1.0 / det;
        Some([(j0 * g11 - j1 * g01) * inv, (j1 * g00 - j0 * g01) * inv])
    }
}

fn ring_start(j: usize) -> usize {
    if j == 0 {
        0
    } else {
        1 + 3 * j * (j - 1)
    }
}

impl CapMesh {
    pub fn build(theta: f64, n: usize, order: GeometryOrder, center: UnitVector) -> Result<Self> {
        if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!("cap radius {theta} outside (0, pi/2)")));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!("mesh needs at least 2 rings, got {n}")));
        }
        let frame = tangent_frame(&center);
        let c = *center.as_vec();
        let (e1, e2) = frame;
        let tau = std::f64::consts::TAU;

        let n_corners = 3 * n * n + 3 * n + 1;
        let mut nodes = Vec::with_capacity(n_corners);
        nodes.push(center);
        for j in 1..=n {
            let r = theta * j as f64 / n as f64;
            let m = 6 * j;
            for k in 0..m {
                let a = tau * k as f64 / m as f64;
                let v = (e1 * a.cos() + e2 * a.sin()) * r;
                nodes.push(UnitVector::new_unchecked(exp_raw(&c, &v)));
            }
        }

        let mut triangles = Vec::with_capacity(6 * n * n);
        for k in 0..6 {
            triangles.push([0, ring_start(1) + k, ring_start(1) + (k + 1) % 6]);
        }
        for j in 2..=n {
            let (n0, n1) = (6 * (j - 1), 6 * j);
            let (s0, s1) = (ring_start(j - 1), ring_start(j));
            let (mut i, mut o) = (0usize, 0usize);
            while i < n0 || o < n1 {
                // advance along whichever ring has the smaller next azimuth
                let next_in = (i + 1) as f64 / n0 as f64;
                let next_out = (o + 1) as f64 / n1 as f64;
                let outer = o < n1 && (i == n0 || next_out <= next_in + 1e-12);
                if outer {
                    triangles.push([s0 + i % n0, s1 + o, s1 + (o + 1) % n1]);
                    o += 1;
                } else {
                    triangles.push([s0 + i, s1 + o % n1, s0 + (i + 1) % n0]);
                    i += 1;
                }
            }
        }

        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for (l, le) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (tri[le[0]], tri[le[1]]);
                let key = (a.min(b), a.max(b));
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                edge_tris[id].push((t, l));
                te[l] = id;
            }
            triangle_edges.push(te);
        }

        let mut boundary_node = vec![false; n_corners + edges.len()];
        let mut boundary_edges = Vec::new();
        for (e, tris) in edge_tris.iter().enumerate() {
            if tris.len() == 1 {
                boundary_edges.push(BoundaryEdge {
                    edge: e,
                    triangle: tris[0].0,
                    local: tris[0].1,
                });
                boundary_node[edges[e][0]] = true;
                boundary_node[edges[e][1]] = true;
                boundary_node[n_corners + e] = true;
            }
        }

        for (e, &[a, b]) in edges.iter().enumerate() {
            let m = (nodes[a].as_vec() + nodes[b].as_vec()).normalize();
            let m = if order == GeometryOrder::Quadratic && edge_tris[e].len() == 1 {
                project_cap_raw(&m, &c, theta, &e1)
            } else {
                m
            };
            nodes.push(UnitVector::new_unchecked(m));
        }

        let mut mesh = CapMesh {
            theta,
            n,
            order,
            center,
            frame,
            nodes,
            n_corners,
            triangles,
            edges,
            triangle_edges,
            boundary_edges,
            boundary_node,
            locator: Locator::default(),
        };
        mesh.locator = Locator::build(&mesh);
        Ok(mesh)
    }

    /// Mesh size `theta / n`.
    pub fn h(&self) -> f64 {
        self.theta / self.n as f64
    }

    pub fn n_corners(&self) -> usize {
        self.n_corners
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Geometric nodes: corners, plus edge midpoints for quadratic geometry.
    pub fn vertices(&self) -> &[UnitVector] {
        match self.order {
            GeometryOrder::Linear => &self.nodes[..self.n_corners],
            GeometryOrder::Quadratic => &self.nodes,
        }
    }

    /// Corner and edge nodes, regardless of the geometry order.
    pub fn all_nodes(&self) -> &[UnitVector] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Six node indices of a triangle: corners then edge nodes.
    pub fn element_nodes(&self, t: usize) -> [usize; 6] {
        let c = self.triangles[t];
        let e = self.triangle_edges[t];
        let nc = self.n_corners;
        [c[0], c[1], c[2], nc + e[0], nc + e[1], nc + e[2]]
    }

    /// Whether a node (corner index, or `n_corners + edge`) lies on the boundary.
    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary_node.get(node).copied().unwrap_or(false)
    }

    pub fn node(&self, i: usize) -> &UnitVector {
        &self.nodes[i]
    }

    pub fn boundary_conormal(&self, node: usize) -> Result<TangentVector> {
        if !self.is_boundary_node(node) {
            return Err(Error::NotBoundary(node));
        }
        Ok(self.conormal_at(&self.nodes[node]))
    }

    /// Outward unit conormal of the exact cap boundary through `x`.
    pub fn conormal_at(&self, x: &UnitVector) -> TangentVector {
        let c = self.center.as_vec();
        let xv = x.as_vec();
        let v = -c + xv * xv.dot(c);
        TangentVector {
            base: *x,
            v: v.normalize(),
        }
    }

    pub fn chart(&self, t: usize, xi: f64, eta: f64) -> ChartPoint {
        let mut f = Vec3::zeros();
        let mut d = [Vec3::zeros(); 2];
        match self.order {
            GeometryOrder::Linear => {
                let (v, g) = p1_basis(xi, eta);
                for (a, &node) in self.triangles[t].iter().enumerate() {
                    let p = self.nodes[node].as_vec();
                    f += p * v[a];
                    d[0] += p * g[a][0];
                    d[1] += p * g[a][1];
                }
            }
            GeometryOrder::Quadratic => {
                let (v, g) = p2_basis(xi, eta);
                for (a, node) in self.element_nodes(t).into_iter().enumerate() {
                    let p = self.nodes[node].as_vec();
                    f += p * v[a];
                    d[0] += p * g[a][0];
                    d[1] += p * g[a][1];
                }
            }
        }
        let r = f.norm();
        let x = f / r;
        let proj = |w: &Vec3| (w - x * x.dot(w)) / r;
        ChartPoint {
            x,
            jac: [proj(&d[0]), proj(&d[1])],
        }
    }

    pub fn statistics(&self) -> MeshStatistics {
        let rule = triangle_rule(6);
        let mut min_area = f64::INFINITY;
        let mut max_area: f64 = 0.0;
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            let a: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(p, w)| w * self.chart(t, p[0], p[1]).area_factor())
                .sum();
            min_area = min_area.min(a);
            max_area = max_area.max(a);
            total += a;
        }
        MeshStatistics {
            h: self.h(),
            min_area,
            max_area,
            total_area: total,
        }
    }

    fn flat(&self, y: &Vec3) -> [f64; 2] {
        let v = log_raw(self.center.as_vec(), y);
        [v.dot(&self.frame.0), v.dot(&self.frame.1)]
    }

    /// Element and reference coordinates of a point of the cap.
    pub fn locate(&self, y: &UnitVector) -> Option<(usize, [f64; 2])> {
        let yv = y.as_vec();
        if angle_raw(self.center.as_vec(), yv) > self.theta * (1.0 + 1e-9) + 1e-12 {
            return None;
        }
        let p = self.flat(yv);
        let mut best: Option<(usize, [f64; 2], f64)> = None;
        for &t in self.locator.candidates(p) {
            if let Some(xi) = self.invert_chart(t, yv) {
                let m = (1.0 - xi[0] - xi[1]).min(xi[0]).min(xi[1]);
                if m >= -1e-12 {
                    return Some((t, xi));
                }
                if best.map_or(true, |b| m > b.2) {
                    best = Some((t, xi, m));
                }
            }
        }
        match best {
            Some((t, xi, m)) if m > -0.05 => {
                let mut a = xi[0].max(0.0);
                let mut b = xi[1].max(0.0);
                let s = a + b;
                if s > 1.0 {
                    a /= s;
                    b /= s;
                }
                Some((t, [a, b]))
            }
            _ => None,
        }
    }

    /// Newton solve for reference coordinates with `chart(t, xi).x = y`.
    pub fn invert_chart(&self, t: usize, y: &Vec3) -> Option<[f64; 2]> {
        let (t1, t2) = tangent_frame(&UnitVector::new_unchecked(*y));
        let mut xi = [1.0 / 3.0, 1.0 / 3.0];
        for _ in 0..30 {
            let cp = self.chart(t, xi[0], xi[1]);
            // residual: tangential offset of the element point from y
            let r = [t1.dot(&cp.x), t2.dot(&cp.x)];
            if cp.x.dot(y) <= 0.0 {
                return None;
            }
            let a = [[t1.dot(&cp.jac[0]), t1.dot(&cp.jac[1])], [t2.dot(&cp.jac[0]), t2.dot(&cp.jac[1])]];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-300 {
                return None;
            }
            let d0 = (a[1][1] * r[0] - a[0][1] * r[1]) / det;
            let d1 = (a[0][0] * r[1] - a[1][0] * r[0]) / det;
            xi[0] -= d0;
            xi[1] -= d1;
            if !(xi[0].is_finite() && xi[1].is_finite()) || xi[0].abs() > 10.0 || xi[1].abs() > 10.0 {
                return None;
            }
            if d0.abs() + d1.abs() < 1e-14 {
                break;
            }
        }
        Some(xi)
    }
}

#[derive(Clone, Debug, Default)]
struct Locator {
    lo: f64,
    cell: f64,
    k: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Locator {
    fn build(mesh: &CapMesh) -> Self {
        let k = 2 * mesh.n;
        let lo = -mesh.theta * 1.05;
        let cell = 2.0 * mesh.theta * 1.05 / k as f64;
        let pad = 0.25 * mesh.h();
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); k * k];
        let clamp = |v: f64| (((v - lo) / cell).floor().max(0.0) as usize).min(k - 1);
        for t in 0..mesh.triangles.len() {
            let mut bmin = [f64::INFINITY; 2];
            let mut bmax = [f64::NEG_INFINITY; 2];
            for node in mesh.element_nodes(t) {
                let p = mesh.flat(mesh.nodes[node].as_vec());
                for d in 0..2 {
                    bmin[d] = bmin[d].min(p[d]);
                    bmax[d] = bmax[d].max(p[d]);
                }
            }
            let (i0, i1) = (clamp(bmin[0] - pad), clamp(bmax[0] + pad));
            let (j0, j1) = (clamp(bmin[1] - pad), clamp(bmax[1] + pad));
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[i * k + j].push(t);
                }
            }
        }
        let mut start = Vec::with_capacity(k * k + 1);
        let mut items = Vec::new();
        for b in &buckets {
            start.push(items.len());
            items.extend_from_slice(b);
        }
        start.push(items.len());
        Locator {
            lo,
            cell,
            k,
            start,
            items,
        }
    }

    fn candidates(&self, p: [f64; 2]) -> &[usize] {
        let i = ((p[0] - self.lo) / self.cell).floor();
        let j = ((p[1] - self.lo) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i >= self.k as f64 || j >= self.k as f64 {
            return &[];
        }
        let b = i as usize * self.k + j as usize;
        &self.items[self.start[b]..self.start[b + 1]]
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn point_in_cap(theta: f64, s: f64, phi: f64) -> UnitVector {
        let polar = theta * s.sqrt();
        UnitVector::from_xyz(polar.sin() * phi.cos(), polar.sin() * phi.sin(), -polar.cos()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn located_points_round_trip_through_the_chart(
            theta in 0.2f64..1.2,
            n in 2usize..9,
            s in 0.0f64..0.999,
            phi in 0.0f64..std::f64::consts::TAU,
        ) {
            let mesh = CapMesh::build(theta, n, GeometryOrder::Quadratic, -UnitVector::e_z()).unwrap();
            let y = point_in_cap(theta, s, phi);
            let (t, xi) = mesh.locate(&y).expect("interior point is located");
            prop_assert!(xi[0] >= -1e-9 && xi[1] >= -1e-9 && xi[0] + xi[1] <= 1.0 + 1e-9);
            let back = mesh.chart(t, xi[0], xi[1]).x;
            prop_assert!((back - y.as_vec()).norm() < 1e-9);
        }

        #[test]
        fn nodes_lie_on_the_sphere_inside_the_cap(theta in 0.2f64..1.5, n in 2usize..10) {
            let mesh = CapMesh::build(theta, n, GeometryOrder::Quadratic, -UnitVector::e_z()).unwrap();
            for x in mesh.all_nodes() {
                prop_assert!((x.as_vec().norm() - 1.0).abs() < 1e-14);
                prop_assert!(-x.as_vec().z >= theta.cos() - 1e-12);
            }
            prop_assert_eq!(mesh.n_triangles(), 6 * n * n);
        }
    }
}
