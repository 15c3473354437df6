//! File writers: legacy VTK, OBJ, CSV, PGM and the JSON solve artifact.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use reflector_ot::fem::FeSpace;
use reflector_ot::pgm::{write_pgm, GrayImage};
use reflector_ot::raytrace::{GridImage, GridSpec};
use reflector_ot::solver::SolveReport;
use reflector_ot::CostSign;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Linear triangles covering the mesh; each quadratic triangle becomes four.
pub fn linear_triangles(space: &FeSpace) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(space.n_elements() * 4);
    for t in 0..space.n_elements() {
        let d = space.element_dofs(t);
        if d.len() == 6 {
            tris.push([d[0], d[3], d[5]]);
            tris.push([d[3], d[1], d[4]]);
            tris.push([d[5], d[4], d[2]]);
            tris.push([d[3], d[4], d[5]]);
        } else {
            tris.push([d[0], d[1], d[2]]);
        }
    }
    tris
}

pub fn radii(u: &[f64], sign: CostSign) -> Vec<f64> {
    u.iter().map(|&v| sign.radius(v)).collect()
}

fn write_text(path: &Path, text: &str) -> io::Result<()> {
    std::fs::write(path, text)
}

/// Legacy ASCII unstructured grid with point data `u` and `rho`.
pub fn write_vtk(path: &Path, space: &FeSpace, u: &[f64], sign: CostSign, hash: &str) -> io::Result<()> {
    let pts = space.dof_points();
    let tris = linear_triangles(space);
    let rho = radii(u, sign);
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "reflector potential, config sha256 {hash}").unwrap();
    writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {} double", pts.len()).unwrap();
    for p in pts {
        writeln!(s, "{:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    writeln!(s, "CELLS {} {}", tris.len(), 4 * tris.len()).unwrap();
    for t in &tris {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", tris.len()).unwrap();
    for _ in &tris {
        s.push_str("5\n");
    }
    writeln!(s, "POINT_DATA {}", pts.len()).unwrap();
    for (name, values) in [("u", u), ("rho", &rho[..])] {
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in values {
            writeln!(s, "{v:e}").unwrap();
        }
    }
    write_text(path, &s)
}

/// Reflector surface `{x rho(x)}` as a triangulated OBJ.
pub fn write_obj(path: &Path, space: &FeSpace, u: &[f64], sign: CostSign, hash: &str) -> io::Result<()> {
    let rho = radii(u, sign);
    let mut s = String::new();
    writeln!(s, "# reflector surface, config sha256 {hash}").unwrap();
    for (p, r) in space.dof_points().iter().zip(&rho) {
        writeln!(s, "v {:e} {:e} {:e}", p.x * r, p.y * r, p.z * r).unwrap();
    }
    for t in linear_triangles(space) {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    write_text(path, &s)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// One row per iterate. Timings go to [`write_timings`] so that this log is
/// reproducible bit for bit.
pub fn write_convergence(path: &Path, report: &SolveReport) -> io::Result<()> {
    let mut s = String::from("k,residual,theta,dual_value,min_det,negative_fraction\n");
    for r in &report.rows {
        writeln!(
            s,
            "{},{:e},{:e},{},{:e},{:e}",
            r.k,
            r.residual,
            r.theta,
            opt(r.dual_value),
            r.min_det,
            r.negative_fraction
        )
        .unwrap();
    }
    write_text(path, &s)
}

pub fn write_timings(path: &Path, report: &SolveReport) -> io::Result<()> {
    let mut s = String::from("k,ms\n");
    for r in &report.rows {
        writeln!(s, "{},{:.3}", r.k, r.ms).unwrap();
    }
    write_text(path, &s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub errors: Option<(f64, f64)>,
}

pub fn write_study(path: &Path, rows: &[StudyRow]) -> io::Result<()> {
    let with_errors = rows.iter().all(|r| r.errors.is_some());
    let mut s = String::from(if with_errors {
        "n,h,l2_error,h1_error,final_residual,iterations\n"
    } else {
        "n,h,final_residual,iterations\n"
    });
    for r in rows {
        match r.errors {
            Some((l2, h1)) if with_errors => writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{}",
                r.n, r.h, l2, h1, r.final_residual, r.iterations
            ),
            _ => writeln!(s, "{},{:e},{:e},{}", r.n, r.h, r.final_residual, r.iterations),
        }
        .unwrap();
    }
    write_text(path, &s)
}

/// Image scaled so that its maximum maps to 65535.
pub fn write_image_pgm(path: &Path, image: &GridImage, hash: &str) -> reflector_ot::Result<()> {
    let (rows, cols) = image.spec.shape();
    let max = image.max_value();
    let mut img = GrayImage::new(cols, rows, 65535);
    for (p, v) in img.pixels.iter_mut().zip(&image.values) {
        *p = if max > 0.0 { (v / max * 65535.0).round() as u16 } else { 0 };
    }
    write_pgm(path, &img, &[format!("config sha256 {hash}"), format!("max density {max:e}")])
}

fn cell_center(spec: &GridSpec, row: usize, col: usize) -> (f64, f64) {
    match *spec {
        GridSpec::Sphere {
            max_polar,
            n_polar,
            n_azimuth,
            ..
        } => (
            (row as f64 + 0.5) * max_polar / n_polar as f64,
            (col as f64 + 0.5) * std::f64::consts::TAU / n_azimuth as f64,
        ),
        GridSpec::Plane { half_width, nx, ny } => (
            -half_width + (col as f64 + 0.5) * 2.0 * half_width / nx as f64,
            half_width - (row as f64 + 0.5) * 2.0 * half_width / ny as f64,
        ),
    }
}

/// Long format: one line per cell with its center coordinates.
pub fn write_image_csv(path: &Path, image: &GridImage) -> io::Result<()> {
    let (rows, cols) = image.spec.shape();
    let header = match image.spec {
        GridSpec::Sphere { .. } => "row,col,polar,azimuth,value\n",
        GridSpec::Plane { .. } => "row,col,x,y,value\n",
    };
    let mut s = String::from(header);
    for r in 0..rows {
        for c in 0..cols {
            let (a, b) = cell_center(&image.spec, r, c);
            writeln!(s, "{r},{c},{a:e},{b:e},{:e}", image.values[r * cols + c]).unwrap();
        }
    }
    write_text(path, &s)
}

/// Reads an image written by [`write_image_csv`]; returns `(rows, cols, values)`.
pub fn read_image_csv(path: &Path) -> Result<(usize, usize, Vec<f64>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cells = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let parse = || -> Option<(usize, usize, f64)> {
            Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(4)?.parse().ok()?))
        };
        cells.push(parse().ok_or_else(|| format!("{}: malformed line {}", path.display(), i + 1))?);
    }
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let mut values = vec![0.0; rows * cols];
    for (r, c, v) in cells {
        values[r * cols + c] = v;
    }
    Ok((rows, cols, values))
}

/// Everything needed to reproduce and trace a solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub config_hash: String,
    pub config: RunConfig,
    /// Mesh resolution actually used.
    pub n: usize,
    pub u: Vec<f64>,
    pub report: SolveReport,
}

impl Artifact {
    pub fn save(&self, path: &Path) -> io::Result<()> {
        write_text(path, &serde_json::to_string(self).map_err(io::Error::other)?)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use reflector_ot::solver::MeshSpec;
    use reflector_ot::CapMesh;

    fn space(degree: usize) -> FeSpace {
        let m = MeshSpec::cap(0.5, 3);
        FeSpace::new(CapMesh::build(m.theta, m.n, m.order, m.center).unwrap(), degree).unwrap()
    }

    #[test]
    fn quadratic_triangles_split_into_four_covering_the_area() {
        let sp = space(2);
        let tris = linear_triangles(&sp);
        assert_eq!(tris.len(), 4 * sp.n_elements());
        let p = sp.dof_points();
        let area: f64 = tris
            .iter()
            .map(|t| 0.5 * (p[t[1]] - p[t[0]]).cross(&(p[t[2]] - p[t[0]])).norm())
            .sum();
        // flat facets underestimate the spherical area slightly
        assert!((area - sp.area()).abs() < 0.01 * sp.area(), "{area} vs {}", sp.area());
        let p1 = space(1);
        assert_eq!(linear_triangles(&p1).len(), p1.n_elements());
    }

    #[test]
    fn vtk_counts_match_the_mesh() {
        let sp = space(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.vtk");
        let u = vec![0.0; sp.n_dofs()];
        write_vtk(&path, &sp, &u, CostSign::NegLog, "abc").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains(&format!("POINTS {} double", sp.n_dofs())));
        assert!(text.contains(&format!("POINT_DATA {}", sp.n_dofs())));
        assert!(text.contains("SCALARS rho double 1"));
    }

    #[test]
    fn image_csv_round_trips() {
        let spec = GridSpec::Plane {
            half_width: 0.3,
            nx: 3,
            ny: 2,
        };
        let image = GridImage {
            spec,
            values: vec![0.0, 1.5, 2.0, 3.25, 4.0, 1e-7],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("image.csv");
        write_image_csv(&path, &image).unwrap();
        let (rows, cols, values) = read_image_csv(&path).unwrap();
        assert_eq!((rows, cols), (2, 3));
        assert_eq!(values, image.values);
    }
}
