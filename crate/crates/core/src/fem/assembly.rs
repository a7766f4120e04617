//! Operator assembly for the fully discrete scheme.
//!
//! Every bilinear and trilinear form is integrated with the 7-point
//! degree-5 rule, which is exact for all P2 x P2 x grad P2 products used
//! here. Elements are visited in mesh order, so assembly is deterministic.

use std::sync::OnceLock;

use super::element::Tabulation;
use super::quadrature;
use super::space::{CoefficientVector, FunctionSpace, VelocitySample};
use crate::error::Result;
use crate::linalg::SparseMatrix;
use crate::mesh::Point;

pub(crate) fn assembly_tabulation() -> &'static Tabulation {
    static TAB: OnceLock<Tabulation> = OnceLock::new();
    TAB.get_or_init(|| Tabulation::new(quadrature::degree5()))
}

/// Operators that do not change during a run.
#[derive(Debug, Clone)]
pub struct ConstantOperators {
    /// Velocity mass matrix (both components).
    pub mass: SparseMatrix,
    /// Vector Laplacian `(grad u, grad v)` without the viscosity factor.
    pub stiffness: SparseMatrix,
    /// `B[i, j] = (q_i, div phi_j)`; pressure rows, velocity columns.
    pub divergence: SparseMatrix,
    /// P1 pressure mass matrix without the penalty factor.
    pub pressure_mass: SparseMatrix,
    /// Weak form of `Q u = (-u2, u1)`: `(Q u, v)`.
    pub rotation: SparseMatrix,
}

/// Local element matrices shared by the global assemblers.
pub(crate) struct LocalMatrices {
    pub mass: [[f64; 6]; 6],
    pub stiffness: [[f64; 6]; 6],
    /// `div[i][c][j] = int lambda_i d_c phi_j`
    pub div: [[[f64; 6]; 2]; 3],
    pub pmass: [[f64; 3]; 3],
}

pub(crate) fn local_matrices(space: &FunctionSpace, cell: usize) -> LocalMatrices {
    let tab = assembly_tabulation();
    let geo = space.geometry(cell);
    let mut lm = LocalMatrices {
        mass: [[0.0; 6]; 6],
        stiffness: [[0.0; 6]; 6],
        div: [[[0.0; 6]; 2]; 3],
        pmass: [[0.0; 3]; 3],
    };
    for q in 0..tab.len() {
        let w = tab.rule.weights[q] * geo.area;
        let lam = &tab.rule.points[q];
        let phi = &tab.p2[q];
        let grads = geo.p2_gradients(&tab.p2_grad[q]);
        for i in 0..6 {
            for j in 0..6 {
                lm.mass[i][j] += w * phi[i] * phi[j];
                lm.stiffness[i][j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
            }
        }
        for i in 0..3 {
            for j in 0..6 {
                lm.div[i][0][j] += w * lam[i] * grads[j][0];
                lm.div[i][1][j] += w * lam[i] * grads[j][1];
            }
            for j in 0..3 {
                lm.pmass[i][j] += w * lam[i] * lam[j];
            }
        }
    }
    lm
}

pub fn assemble_constant_operators(space: &FunctionSpace) -> ConstantOperators {
    let nu = space.n_velocity();
    let np = space.n_pressure();
    let n = space.n_nodes();
    let nc = space.n_cells();
    let mut mass = Vec::with_capacity(72 * nc);
    let mut stiff = Vec::with_capacity(72 * nc);
    let mut div = Vec::with_capacity(36 * nc);
    let mut pmass = Vec::with_capacity(9 * nc);
    let mut rot = Vec::with_capacity(72 * nc);
    for cell in 0..nc {
        let lm = local_matrices(space, cell);
        let nodes = space.cell_nodes(cell);
        let pdofs = space.cell_pressure_dofs(cell);
        for i in 0..6 {
            for j in 0..6 {
                let (a, b) = (nodes[i], nodes[j]);
                for c in 0..2 {
                    mass.push((a + c * n, b + c * n, lm.mass[i][j]));
                    stiff.push((a + c * n, b + c * n, lm.stiffness[i][j]));
                }
                rot.push((a, b + n, -lm.mass[i][j]));
                rot.push((a + n, b, lm.mass[i][j]));
            }
        }
        for i in 0..3 {
            for j in 0..6 {
                div.push((pdofs[i], nodes[j], lm.div[i][0][j]));
                div.push((pdofs[i], nodes[j] + n, lm.div[i][1][j]));
            }
            for j in 0..3 {
                pmass.push((pdofs[i], pdofs[j], lm.pmass[i][j]));
            }
        }
    }
    let build = |rows, cols, t: &[(usize, usize, f64)]| {
        SparseMatrix::from_triplets(rows, cols, t).expect("element dofs are in range")
    };
    ConstantOperators {
        mass: build(nu, nu, &mass),
        stiffness: build(nu, nu, &stiff),
        divergence: build(np, nu, &div),
        pressure_mass: build(np, np, &pmass),
        rotation: build(nu, nu, &rot),
    }
}

/// Scalar 6x6 convection block `N[i][j] = b*(a, phi_j, phi_i)` on one cell,
/// applied identically to both velocity components.
pub(crate) fn convection_cell_matrix(
    space: &FunctionSpace,
    transport: &[f64],
    cell: usize,
    samples: &mut Vec<VelocitySample>,
) -> [[f64; 6]; 6] {
    let tab = assembly_tabulation();
    space.eval_velocity(transport, cell, tab, samples);
    let geo = space.geometry(cell);
    let mut m = [[0.0; 6]; 6];
    for (q, s) in samples.iter().enumerate() {
        let w = tab.rule.weights[q] * geo.area;
        let phi = &tab.p2[q];
        let grads = geo.p2_gradients(&tab.p2_grad[q]);
        let half_div = 0.5 * s.div();
        for j in 0..6 {
            let adv = s.u[0] * grads[j][0] + s.u[1] * grads[j][1] + half_div * phi[j];
            for i in 0..6 {
                m[i][j] += w * adv * phi[i];
            }
        }
    }
    m
}

/// Matrix `N(a)` with `w^T N v = (a . grad v, w) + 1/2 ((div a) v, w)`.
pub fn assemble_mean_convection(
    space: &FunctionSpace,
    mean: &CoefficientVector,
) -> Result<SparseMatrix> {
    space.check_velocity(mean)?;
    let n = space.n_nodes();
    let mut triplets = Vec::with_capacity(72 * space.n_cells());
    let mut samples = Vec::new();
    for cell in 0..space.n_cells() {
        let m = convection_cell_matrix(space, mean.values(), cell, &mut samples);
        let nodes = space.cell_nodes(cell);
        for i in 0..6 {
            for j in 0..6 {
                for c in 0..2 {
                    triplets.push((nodes[i] + c * n, nodes[j] + c * n, m[i][j]));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(space.n_velocity(), space.n_velocity(), &triplets)
        .expect("element dofs are in range"))
}

/// Load vector `r_i = b*(fluct, carrier, phi_i)`.
pub fn apply_fluctuation_convection(
    space: &FunctionSpace,
    fluct: &CoefficientVector,
    carrier: &CoefficientVector,
) -> Result<CoefficientVector> {
    space.check_velocity(fluct)?;
    space.check_velocity(carrier)?;
    let tab = assembly_tabulation();
    let n = space.n_nodes();
    let mut out = vec![0.0; space.n_velocity()];
    let mut fs = Vec::new();
    let mut cs = Vec::new();
    for cell in 0..space.n_cells() {
        space.eval_velocity(fluct.values(), cell, tab, &mut fs);
        space.eval_velocity(carrier.values(), cell, tab, &mut cs);
        let geo = space.geometry(cell);
        let nodes = space.cell_nodes(cell);
        let mut local = [[0.0; 6]; 2];
        for q in 0..tab.len() {
            let w = tab.rule.weights[q] * geo.area;
            let (f, v) = (&fs[q], &cs[q]);
            let half_div = 0.5 * f.div();
            for c in 0..2 {
                let val = f.u[0] * v.grad[c][0] + f.u[1] * v.grad[c][1] + half_div * v.u[c];
                for i in 0..6 {
                    local[c][i] += w * val * tab.p2[q][i];
                }
            }
        }
        for c in 0..2 {
            for i in 0..6 {
                out[nodes[i] + c * n] += local[c][i];
            }
        }
    }
    Ok(CoefficientVector::velocity(out))
}

/// Load vector `(f, phi_i)` for a pointwise body force.
pub fn assemble_load(space: &FunctionSpace, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
    let tab = assembly_tabulation();
    let n = space.n_nodes();
    let mut out = vec![0.0; space.n_velocity()];
    for cell in 0..space.n_cells() {
        let geo = space.geometry(cell);
        let nodes = space.cell_nodes(cell);
        for q in 0..tab.len() {
            let w = tab.rule.weights[q] * geo.area;
            let fx = f(geo.map(&tab.rule.points[q]));
            for i in 0..6 {
                out[nodes[i]] += w * fx[0] * tab.p2[q][i];
                out[nodes[i] + n] += w * fx[1] * tab.p2[q][i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::space::{interpolate_pressure, interpolate_velocity};
    use crate::linalg::dot;
    use crate::mesh::generate_unit_square;

    fn space(g: usize) -> FunctionSpace {
        FunctionSpace::new(Arc::new(generate_unit_square(g).unwrap()))
    }

    #[test]
    fn mass_total_is_twice_area() {
        let s = space(3);
        let ops = assemble_constant_operators(&s);
        let total: f64 = ops.mass.values().iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
        let ptotal: f64 = ops.pressure_mass.values().iter().sum();
        assert!((ptotal - 1.0).abs() < 1e-13);
    }

    #[test]
    fn mass_row_sums_integrate_basis() {
        // Row sums of the scalar mass matrix are the integrals of the basis
        // functions; P2 vertex functions integrate to zero on each element,
        // edge functions to area/3.
        let s = space(2);
        let ops = assemble_constant_operators(&s);
        let n = s.n_nodes();
        let nv = s.n_pressure();
        let mut expected = vec![0.0; n];
        for c in 0..s.n_cells() {
            let a = s.geometry(c).area;
            for &node in &s.cell_nodes(c)[3..] {
                expected[node] += a / 3.0;
            }
        }
        let ones = vec![1.0; s.n_velocity()];
        let rs = ops.mass.mul_vec(&ones);
        for i in 0..n {
            assert!((rs[i] - expected[i]).abs() < 1e-14);
            assert!((rs[i + n] - expected[i]).abs() < 1e-14);
        }
        assert!(rs[..nv].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn stiffness_kills_constants() {
        let s = space(4);
        let ops = assemble_constant_operators(&s);
        let u = interpolate_velocity(&s, |_| [2.5, -0.7]);
        let r = ops.stiffness.mul_vec(u.values());
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn divergence_of_rigid_rotation_vanishes() {
        let s = space(4);
        let ops = assemble_constant_operators(&s);
        let u = interpolate_velocity(&s, |x| [-x[1], x[0]]);
        let r = ops.divergence.mul_vec(u.values());
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn divergence_pairs_with_pressure() {
        // (q, div u) for u = (x^2, 0), q = 1 equals int 2x = 1.
        let s = space(3);
        let ops = assemble_constant_operators(&s);
        let u = interpolate_velocity(&s, |x| [x[0] * x[0], 0.0]);
        let q = interpolate_pressure(&s, |_| 1.0);
        let v = dot(q.values(), &ops.divergence.mul_vec(u.values()));
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn rotation_of_constant_field() {
        let s = space(2);
        let ops = assemble_constant_operators(&s);
        let n = s.n_nodes();
        let u = interpolate_velocity(&s, |_| [0.0, 1.0]);
        let r = ops.rotation.mul_vec(u.values());
        let ones: Vec<f64> = (0..s.n_velocity()).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
        let m1 = ops.mass.mul_vec(&ones);
        for i in 0..n {
            assert!((r[i] + m1[i]).abs() < 1e-14);
            assert!(r[i + n].abs() < 1e-14);
        }
        // Q is skew: (Qu, u) = 0.
        let w = interpolate_velocity(&s, |x| [x[0] * x[1], 1.0 - x[0]]);
        assert!(ops.rotation.bilinear(w.values(), w.values()).abs() < 1e-14);
    }

    #[test]
    fn zero_mean_gives_zero_convection() {
        let s = space(2);
        let n = assemble_mean_convection(&s, &s.zero_velocity()).unwrap();
        assert!(n.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fluctuation_path_matches_matrix_path() {
        let s = space(3);
        let a = interpolate_velocity(&s, |x| [x[0].sin() + x[1], x[0] * x[1] - 0.3]);
        let v = interpolate_velocity(&s, |x| [(2.0 * x[1]).cos(), x[0] * x[0]]);
        let by_matrix = assemble_mean_convection(&s, &a).unwrap().mul_vec(v.values());
        let by_load = apply_fluctuation_convection(&s, &a, &v).unwrap();
        for (p, q) in by_matrix.iter().zip(by_load.values()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn space_mismatch_is_rejected() {
        let s = space(2);
        let other = space(3).zero_velocity();
        assert!(assemble_mean_convection(&s, &other).is_err());
        assert!(apply_fluctuation_convection(&s, &s.zero_velocity(), &other).is_err());
    }
}
