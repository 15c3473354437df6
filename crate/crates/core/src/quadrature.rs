//! Quadrature on the reference triangle `{(xi, eta): xi, eta >= 0, xi + eta <= 1}`
//! and on the unit interval.

#[derive(Clone, Debug)]
pub struct TriangleRule {
    /// Reference coordinates `(xi, eta)`.
    pub points: Vec<[f64; 2]>,
    /// Weights summing to the reference area `1/2`.
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn push_orbit(points: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>, w: f64, b: [f64; 3]) {
    let mut seen: Vec<[f64; 3]> = Vec::new();
    let perms = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [2, 1, 0], [1, 0, 2]];
    for p in perms {
        let c = [b[p[0]], b[p[1]], b[p[2]]];
        if seen.iter().any(|s| s.iter().zip(&c).all(|(a, b)| (a - b).abs() < 1e-15)) {
            continue;
        }
        seen.push(c);
        points.push([c[1], c[2]]);
        weights.push(0.5 * w);
    }
}

/// Symmetric rule exact for polynomials of total degree `degree`
/// (rounded up to 1, 2, 4 or 6).
pub fn triangle_rule(degree: usize) -> TriangleRule {
    let mut pts = Vec::new();
    let mut w = Vec::new();
    let degree = match degree {
        0 | 1 => {
            push_orbit(&mut pts, &mut w, 1.0, [1.0 / 3.0; 3]);
            1
        }
        2 => {
            push_orbit(&mut pts, &mut w, 1.0 / 3.0, [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]);
            2
        }
        3 | 4 => {
            push_orbit(
                &mut pts,
                &mut w,
                0.223381589678011,
                [0.108103018168070, 0.445948490915965, 0.445948490915965],
            );
            push_orbit(
                &mut pts,
                &mut w,
                0.109951743655322,
                [0.816847572980459, 0.091576213509771, 0.091576213509771],
            );
            4
        }
        _ => {
            push_orbit(
                &mut pts,
                &mut w,
                0.116786275726379,
                [0.501426509658179, 0.249286745170910, 0.249286745170910],
            );
            push_orbit(
                &mut pts,
                &mut w,
                0.050844906370207,
                [0.873821971016996, 0.063089014491502, 0.063089014491502],
            );
            push_orbit(
                &mut pts,
                &mut w,
                0.082851075618374,
                [0.053145049844817, 0.310352451033784, 0.636502499121399],
            );
            6
        }
    };
    TriangleRule {
        points: pts,
        weights: w,
        degree,
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}
