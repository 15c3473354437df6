use rayon::prelude::*;

use super::space::FeSpace;
use super::sparse::CsrMatrix;

fn assemble(space: &FeSpace, local: impl Fn(usize, &mut [[f64; 6]; 6]) + Sync) -> CsrMatrix {
    let (row_ptr, cols) = space.pattern();
    let mut m = CsrMatrix::zeros_with_pattern(row_ptr.to_vec(), cols.to_vec());
    let nb = space.n_local();
    let blocks: Vec<[[f64; 6]; 6]> = (0..space.n_elements())
        .into_par_iter()
        .map(|t| {
            let mut a = [[0.0; 6]; 6];
            local(t, &mut a);
            a
        })
        .collect();
    for (t, a) in blocks.iter().enumerate() {
        let dofs = space.element_dofs(t);
        for i in 0..nb {
            for j in 0..nb {
                m.add(dofs[i], dofs[j], a[i][j]);
            }
        }
    }
    m
}

/// `K_ij = int grad_S phi_i . grad_S phi_j dA`.
pub fn assemble_stiffness(space: &FeSpace) -> CsrMatrix {
    let nb = space.n_local();
    let nq = space.n_qp();
    let w = space.qp_weights();
    assemble(space, |t, a| {
        for q in 0..nq {
            let g = space.qp_basis_grads(t, q);
            let wq = w[t * nq + q];
            for i in 0..nb {
                for j in i..nb {
                    a[i][j] += wq * g[i].dot(&g[j]);
                }
            }
        }
        for i in 0..nb {
            for j in 0..i {
                a[i][j] = a[j][i];
            }
        }
    })
}

/// `M_ij = int phi_i phi_j dA`.
pub fn assemble_mass(space: &FeSpace) -> CsrMatrix {
    let nb = space.n_local();
    let nq = space.n_qp();
    let w = space.qp_weights();
    assemble(space, |t, a| {
        for q in 0..nq {
            let v = space.qp_basis(q);
            let wq = w[t * nq + q];
            for i in 0..nb {
                for j in i..nb {
                    a[i][j] += wq * v[i] * v[j];
                }
            }
        }
        for i in 0..nb {
            for j in 0..i {
                a[i][j] = a[j][i];
            }
        }
    })
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::mesh::{CapMesh, GeometryOrder};
    use crate::sphere::UnitVector;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn constants_span_the_stiffness_kernel_and_mass_gives_the_area(
            theta in 0.2f64..1.4,
            n in 2usize..7,
            degree in 1usize..3,
        ) {
            let mesh = CapMesh::build(theta, n, GeometryOrder::Quadratic, -UnitVector::e_z()).unwrap();
            let space = FeSpace::new(mesh, degree).unwrap();
            let ones = vec![1.0; space.n_dofs()];
            let k1 = assemble_stiffness(&space).apply(&ones);
            prop_assert!(k1.iter().all(|v| v.abs() < 1e-11));
            let m1 = assemble_mass(&space).apply(&ones);
            let exact = 2.0 * std::f64::consts::PI * (1.0 - theta.cos());
            prop_assert!((m1.iter().sum::<f64>() - exact).abs() < 1e-3 * exact);
        }
    }
}
