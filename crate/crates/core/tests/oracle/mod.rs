#![allow(clippy::needless_range_loop)]

//! A small dense reference solver for one member of the penalized scheme,
//! written without the library's assembly or linear algebra.
//!
//! Each step solves
//!
//! ```text
//! (u - u_old)/dt + b(u_old; u, v) + nu (grad u, grad v) - (p, div v) = (f, v)
//! (div u, q) + eps (p, q) = 0
//! ```
//!
//! with `b(a; u, v) = 1/2 (a.grad u, v) - 1/2 (a.grad v, u)` and the velocity
//! fixed to the boundary data at every boundary node.

use std::collections::BTreeMap;

pub type Pt = [f64; 2];

pub struct Problem<'a> {
    pub nu: f64,
    pub eps: f64,
    pub dt: f64,
    pub t_final: f64,
    pub force: &'a dyn Fn(Pt, f64) -> [f64; 2],
    /// Boundary data and initial condition.
    pub exact: &'a dyn Fn(Pt, f64) -> [f64; 2],
    pub on_boundary: &'a dyn Fn(Pt) -> bool,
}

pub struct Solution {
    /// Coordinates of every quadratic node.
    pub nodes: Vec<Pt>,
    /// Final velocity per node.
    pub velocity: Vec<[f64; 2]>,
    pub steps: usize,
}

/// 7-point rule, exact to degree 5: (barycentric point, weight / area).
fn rule() -> Vec<([f64; 3], f64)> {
    let s = 15f64.sqrt();
    let mut out = vec![([1.0 / 3.0; 3], 9.0 / 40.0)];
    for (a, w) in [((6.0 - s) / 21.0, (155.0 - s) / 1200.0), ((6.0 + s) / 21.0, (155.0 + s) / 1200.0)] {
        let b = 1.0 - 2.0 * a;
        out.extend([([a, a, b], w), ([a, b, a], w), ([b, a, a], w)]);
    }
    out
}

struct Tri {
    /// Global node numbers: vertices, then midpoints of (1,2), (2,0), (0,1).
    nodes: [usize; 6],
    area: f64,
    /// Gradients of the barycentric coordinates.
    dl: [[f64; 2]; 3],
}

fn basis(l: [f64; 3], dl: &[[f64; 2]; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let mut v = [0.0; 6];
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        v[i] = l[i] * (2.0 * l[i] - 1.0);
        for c in 0..2 {
            g[i][c] = (4.0 * l[i] - 1.0) * dl[i][c];
        }
    }
    for (k, (a, b)) in [(1, 2), (2, 0), (0, 1)].into_iter().enumerate() {
        v[3 + k] = 4.0 * l[a] * l[b];
        for c in 0..2 {
            g[3 + k][c] = 4.0 * (l[a] * dl[b][c] + l[b] * dl[a][c]);
        }
    }
    (v, g)
}

/// Gaussian elimination with partial pivoting on a row-major matrix.
fn dense_solve(n: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        assert!(a[piv * n + k].abs() > 1e-300, "oracle matrix is singular");
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] / d;
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                a[i * n + c] -= f * a[k * n + c];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k * n + c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k * n + k];
    }
    x
}

pub fn solve(vertices: &[Pt], triangles: &[[usize; 3]], pb: &Problem) -> Solution {
    let nv = vertices.len();
    let mut nodes: Vec<Pt> = vertices.to_vec();
    let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut tris = Vec::new();
    for t in triangles {
        let p = t.map(|v| vertices[v]);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let dl = [
            [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
            [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
            [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
        ];
        let mut tn = [t[0], t[1], t[2], 0, 0, 0];
        for (k, (a, b)) in [(1, 2), (2, 0), (0, 1)].into_iter().enumerate() {
            let key = (t[a].min(t[b]), t[a].max(t[b]));
            let next = nodes.len();
            let id = *mid.entry(key).or_insert(next);
            if id == next {
                let (pa, pb) = (vertices[t[a]], vertices[t[b]]);
                nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
            tn[3 + k] = id;
        }
        tris.push(Tri {
            nodes: tn,
            area: 0.5 * det.abs(),
            dl,
        });
    }
    let nn = nodes.len();
    // unknowns: (ux, uy) interleaved per node, then pressure per vertex
    let n = 2 * nn + nv;
    let ux = |node: usize, c: usize| 2 * node + c;
    let pi = |v: usize| 2 * nn + v;
    let boundary: Vec<bool> = nodes.iter().map(|&x| (pb.on_boundary)(x)).collect();
    let q = rule();

    let mut u: Vec<f64> = vec![0.0; 2 * nn];
    for (i, &x) in nodes.iter().enumerate() {
        let v = (pb.exact)(x, 0.0);
        u[ux(i, 0)] = v[0];
        u[ux(i, 1)] = v[1];
    }

    let mut t = 0.0;
    let mut steps = 0;
    while t < pb.t_final && pb.t_final - t > 1e-12 * pb.t_final {
        // the last step is shortened to land on T
        let remaining = pb.t_final - t;
        let (dt, t1) = if remaining <= pb.dt * (1.0 + 1e-9) {
            (remaining, pb.t_final)
        } else {
            (pb.dt, t + pb.dt)
        };
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        for tri in &tris {
            for &(l, w) in &q {
                let wq = w * tri.area;
                let (phi, grad) = basis(l, &tri.dl);
                let mut x = [0.0; 2];
                for i in 0..3 {
                    let p = nodes[tri.nodes[i]];
                    x[0] += l[i] * p[0];
                    x[1] += l[i] * p[1];
                }
                let mut adv = [0.0; 2];
                for k in 0..6 {
                    for c in 0..2 {
                        adv[c] += u[ux(tri.nodes[k], c)] * phi[k];
                    }
                }
                let f = (pb.force)(x, t1);
                for i in 0..6 {
                    let gi = tri.nodes[i];
                    let a_dot_gi = adv[0] * grad[i][0] + adv[1] * grad[i][1];
                    for c in 0..2 {
                        b[ux(gi, c)] += wq * f[c] * phi[i];
                    }
                    for j in 0..6 {
                        let gj = tri.nodes[j];
                        let a_dot_gj = adv[0] * grad[j][0] + adv[1] * grad[j][1];
                        let mass = phi[i] * phi[j];
                        let val = mass / dt
                            + pb.nu * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1])
                            + 0.5 * (a_dot_gj * phi[i] - a_dot_gi * phi[j]);
                        for c in 0..2 {
                            a[ux(gi, c) * n + ux(gj, c)] += wq * val;
                            b[ux(gi, c)] += wq * mass / dt * u[ux(gj, c)];
                        }
                    }
                    for k in 0..3 {
                        let gk = tri.nodes[k];
                        for c in 0..2 {
                            let d = wq * l[k] * grad[i][c];
                            a[ux(gi, c) * n + pi(gk)] -= d;
                            a[pi(gk) * n + ux(gi, c)] += d;
                        }
                    }
                }
                for k in 0..3 {
                    for m in 0..3 {
                        a[pi(tri.nodes[k]) * n + pi(tri.nodes[m])] += wq * pb.eps * l[k] * l[m];
                    }
                }
            }
        }
        for i in 0..nn {
            if !boundary[i] {
                continue;
            }
            let g = (pb.exact)(nodes[i], t1);
            for c in 0..2 {
                let r = ux(i, c);
                a[r * n..(r + 1) * n].iter_mut().for_each(|x| *x = 0.0);
                a[r * n + r] = 1.0;
                b[r] = g[c];
            }
        }
        let x = dense_solve(n, a, b);
        u.copy_from_slice(&x[..2 * nn]);
        t = t1;
        steps += 1;
    }
    Solution {
        velocity: (0..nn).map(|i| [u[ux(i, 0)], u[ux(i, 1)]]).collect(),
        nodes,
        steps,
    }
}
