//! Quadratic (P2) and linear (P1) Lagrange elements on triangles.
//!
//! Local node order: the three vertices, then the midpoints of edges
//! (0,1), (1,2) and (2,0). This matches the VTK quadratic triangle.

use super::quadrature::Rule;
use crate::mesh::Point;

/// Local vertex pairs for the three edge nodes.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Affine geometry of one physical triangle.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates (constant per triangle).
    pub grad_lambda: [[f64; 2]; 3],
}

impl Geometry {
    pub fn new(vertices: [Point; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let (x10, y10) = (p1[0] - p0[0], p1[1] - p0[1]);
        let (x20, y20) = (p2[0] - p0[0], p2[1] - p0[1]);
        let det = x10 * y20 - x20 * y10;
        let g1 = [y20 / det, -x20 / det];
        let g2 = [-y10 / det, x10 / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        Self {
            vertices,
            area: 0.5 * det,
            grad_lambda: [g0, g1, g2],
        }
    }

    /// Physical coordinates of a barycentric point.
    pub fn map(&self, bary: &[f64; 3]) -> Point {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }

    /// Physical gradients of the six P2 basis functions at a tabulated point.
    pub fn p2_gradients(&self, coeffs: &[[f64; 3]; 6]) -> [[f64; 2]; 6] {
        let g = &self.grad_lambda;
        coeffs.map(|c| {
            [
                c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0],
                c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1],
            ]
        })
    }
}

/// P2 basis values at a barycentric point.
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Gradient of each P2 basis function as coefficients on the barycentric
/// gradients: `grad phi_i = sum_k c[i][k] grad lambda_k`.
pub fn p2_gradient_coeffs(l: &[f64; 3]) -> [[f64; 3]; 6] {
    let mut c = [[0.0; 3]; 6];
    for i in 0..3 {
        c[i][i] = 4.0 * l[i] - 1.0;
    }
    for (e, &[a, b]) in EDGE_VERTICES.iter().enumerate() {
        c[3 + e][a] = 4.0 * l[b];
        c[3 + e][b] = 4.0 * l[a];
    }
    c
}

/// A quadrature rule with basis data evaluated at its points.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: Rule,
    pub p2: Vec<[f64; 6]>,
    pub p2_grad: Vec<[[f64; 3]; 6]>,
}

impl Tabulation {
    pub fn new(rule: Rule) -> Self {
        let p2 = rule.points.iter().map(p2_values).collect();
        let p2_grad = rule.points.iter().map(p2_gradient_coeffs).collect();
        Self { rule, p2, p2_grad }
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODES: [[f64; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ];

    #[test]
    fn p2_is_nodal() {
        for (i, n) in NODES.iter().enumerate() {
            let v = p2_values(n);
            for (j, &vj) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vj - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p2_partition_of_unity() {
        let l = [0.2, 0.3, 0.5];
        let s: f64 = p2_values(&l).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        let geo = Geometry::new([[0.1, 0.2], [1.3, 0.1], [0.4, 0.9]]);
        let grads = geo.p2_gradients(&p2_gradient_coeffs(&l));
        let gx: f64 = grads.iter().map(|g| g[0]).sum();
        let gy: f64 = grads.iter().map(|g| g[1]).sum();
        assert!(gx.abs() < 1e-13 && gy.abs() < 1e-13);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let geo = Geometry::new([[0.1, 0.2], [1.3, 0.1], [0.4, 0.9]]);
        // physical point -> barycentric via the inverse affine map
        let to_bary = |x: Point| {
            let g = &geo.grad_lambda;
            let v0 = geo.vertices[0];
            let l1 = g[1][0] * (x[0] - v0[0]) + g[1][1] * (x[1] - v0[1]);
            let l2 = g[2][0] * (x[0] - v0[0]) + g[2][1] * (x[1] - v0[1]);
            [1.0 - l1 - l2, l1, l2]
        };
        let l = [0.25, 0.35, 0.4];
        let x = geo.map(&l);
        let grads = geo.p2_gradients(&p2_gradient_coeffs(&l));
        let h = 1e-6;
        for i in 0..6 {
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd = (p2_values(&to_bary(xp))[i] - p2_values(&to_bary(xm))[i]) / (2.0 * h);
                assert!((fd - grads[i][d]).abs() < 1e-7, "basis {i} dir {d}");
            }
        }
    }
}
