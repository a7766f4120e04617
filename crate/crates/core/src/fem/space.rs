//! Taylor-Hood degree-of-freedom management.
//!
//! Velocity is continuous P2, pressure continuous P1. Scalar P2 nodes are
//! numbered vertices first, then edges in sorted `(min, max)` vertex order.
//! Velocity unknowns are component-blocked: dof `c * n_nodes + node`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::element::{Geometry, Tabulation, EDGE_VERTICES};
use crate::error::{Error, Result};
use crate::mesh::{edge_key, Mesh, Point, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Velocity,
    Pressure,
}

/// Coefficients of a discrete velocity or pressure field.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    values: Vec<f64>,
    kind: SpaceKind,
}

impl CoefficientVector {
    pub fn velocity(values: Vec<f64>) -> Self {
        Self {
            values,
            kind: SpaceKind::Velocity,
        }
    }

    pub fn pressure(values: Vec<f64>) -> Self {
        Self {
            values,
            kind: SpaceKind::Pressure,
        }
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self - other`, keeping the kind.
    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.kind, other.kind);
        Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            kind: self.kind,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|a| s * a).collect(),
            kind: self.kind,
        }
    }
}

/// Value and gradient of a velocity field at one quadrature point.
/// `grad[c][d]` is the derivative of component `c` along axis `d`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VelocitySample {
    pub x: Point,
    pub u: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

impl VelocitySample {
    pub fn div(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    edges: Vec<[usize; 2]>,
    cell_nodes: Vec<[usize; 6]>,
    node_coords: Vec<Point>,
    geometry: Vec<Geometry>,
    boundary_nodes: BTreeMap<Tag, Vec<usize>>,
    dirichlet_sets: BTreeMap<Tag, Vec<usize>>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let nv = mesh.n_vertices();
        let mut edges: Vec<[usize; 2]> = mesh
            .triangles()
            .iter()
            .flat_map(|t| EDGE_VERTICES.map(|[a, b]| edge_key(t[a], t[b])))
            .map(|(a, b)| [a, b])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let edge_index: HashMap<(usize, usize), usize> = edges
            .iter()
            .enumerate()
            .map(|(i, e)| ((e[0], e[1]), i))
            .collect();

        let cell_nodes: Vec<[usize; 6]> = mesh
            .triangles()
            .iter()
            .map(|t| {
                let e = EDGE_VERTICES.map(|[a, b]| nv + edge_index[&edge_key(t[a], t[b])]);
                [t[0], t[1], t[2], e[0], e[1], e[2]]
            })
            .collect();

        let mut node_coords = mesh.vertices().to_vec();
        let vs = mesh.vertices();
        node_coords.extend(
            edges
                .iter()
                .map(|e| [0.5 * (vs[e[0]][0] + vs[e[1]][0]), 0.5 * (vs[e[0]][1] + vs[e[1]][1])]),
        );

        let geometry = (0..mesh.n_triangles())
            .map(|t| Geometry::new(mesh.triangle_points(t)))
            .collect();

        let mut boundary_nodes: BTreeMap<Tag, Vec<usize>> = BTreeMap::new();
        for be in mesh.boundary_edges() {
            let [a, b] = be.vertices;
            let mid = nv + edge_index[&edge_key(a, b)];
            boundary_nodes.entry(be.tag).or_default().extend([a, b, mid]);
        }
        let n_nodes = node_coords.len();
        let mut dirichlet_sets = BTreeMap::new();
        for (tag, nodes) in boundary_nodes.iter_mut() {
            nodes.sort_unstable();
            nodes.dedup();
            let dofs = nodes.iter().copied().chain(nodes.iter().map(|&n| n + n_nodes)).collect();
            dirichlet_sets.insert(*tag, dofs);
        }

        Self {
            mesh,
            edges,
            cell_nodes,
            node_coords,
            geometry,
            boundary_nodes,
            dirichlet_sets,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n_cells(&self) -> usize {
        self.cell_nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of scalar P2 nodes (vertices plus edge midpoints).
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn node_coords(&self) -> &[Point] {
        &self.node_coords
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize; 6] {
        &self.cell_nodes[cell]
    }

    pub fn cell_pressure_dofs(&self, cell: usize) -> [usize; 3] {
        self.mesh.triangles()[cell]
    }

    /// Velocity dofs of a cell: six x-component dofs then six y-component dofs.
    pub fn cell_velocity_dofs(&self, cell: usize) -> [usize; 12] {
        let n = self.n_nodes();
        let c = &self.cell_nodes[cell];
        std::array::from_fn(|i| if i < 6 { c[i] } else { c[i - 6] + n })
    }

    pub fn geometry(&self, cell: usize) -> &Geometry {
        &self.geometry[cell]
    }

    /// Scalar P2 nodes lying on boundary edges with each tag.
    pub fn boundary_nodes(&self) -> &BTreeMap<Tag, Vec<usize>> {
        &self.boundary_nodes
    }

    /// Velocity dofs (both components) on boundary edges with each tag.
    pub fn dirichlet_sets(&self) -> &BTreeMap<Tag, Vec<usize>> {
        &self.dirichlet_sets
    }

    pub fn zero_velocity(&self) -> CoefficientVector {
        CoefficientVector::velocity(vec![0.0; self.n_velocity()])
    }

    pub fn zero_pressure(&self) -> CoefficientVector {
        CoefficientVector::pressure(vec![0.0; self.n_pressure()])
    }

    pub fn check_velocity(&self, u: &CoefficientVector) -> Result<()> {
        if u.kind != SpaceKind::Velocity || u.len() != self.n_velocity() {
            return Err(Error::Dimension(format!(
                "expected velocity vector of length {}, got {:?} of length {}",
                self.n_velocity(),
                u.kind,
                u.len()
            )));
        }
        Ok(())
    }

    pub fn check_pressure(&self, p: &CoefficientVector) -> Result<()> {
        if p.kind != SpaceKind::Pressure || p.len() != self.n_pressure() {
            return Err(Error::Dimension(format!(
                "expected pressure vector of length {}, got {:?} of length {}",
                self.n_pressure(),
                p.kind,
                p.len()
            )));
        }
        Ok(())
    }

    /// Evaluates a velocity field (given by its raw coefficients) at every
    /// point of a tabulated rule on one cell.
    pub fn eval_velocity(
        &self,
        u: &[f64],
        cell: usize,
        tab: &Tabulation,
        out: &mut Vec<VelocitySample>,
    ) {
        let geo = &self.geometry[cell];
        let nodes = &self.cell_nodes[cell];
        let n = self.n_nodes();
        out.clear();
        for q in 0..tab.len() {
            let phi = &tab.p2[q];
            let grads = geo.p2_gradients(&tab.p2_grad[q]);
            let mut s = VelocitySample {
                x: geo.map(&tab.rule.points[q]),
                ..Default::default()
            };
            for i in 0..6 {
                for c in 0..2 {
                    let coef = u[nodes[i] + c * n];
                    s.u[c] += coef * phi[i];
                    s.grad[c][0] += coef * grads[i][0];
                    s.grad[c][1] += coef * grads[i][1];
                }
            }
            out.push(s);
        }
    }
}

/// Nodal interpolant of a vector field into the P2 velocity space.
pub fn interpolate_velocity(
    space: &FunctionSpace,
    f: impl Fn(Point) -> [f64; 2],
) -> CoefficientVector {
    let n = space.n_nodes();
    let mut v = vec![0.0; 2 * n];
    for (i, &x) in space.node_coords.iter().enumerate() {
        let [a, b] = f(x);
        v[i] = a;
        v[i + n] = b;
    }
    CoefficientVector::velocity(v)
}

/// Nodal interpolant of a scalar field into the P1 pressure space.
pub fn interpolate_pressure(space: &FunctionSpace, f: impl Fn(Point) -> f64) -> CoefficientVector {
    CoefficientVector::pressure(space.mesh.vertices().iter().map(|&x| f(x)).collect())
}
