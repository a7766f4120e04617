//! Discrete norms and errors against pointwise exact solutions.

use std::sync::OnceLock;

use super::element::Tabulation;
use super::quadrature;
use super::space::{CoefficientVector, FunctionSpace};
use crate::error::Result;
use crate::mesh::Point;

pub(crate) fn norm_tabulation() -> &'static Tabulation {
    static TAB: OnceLock<Tabulation> = OnceLock::new();
    TAB.get_or_init(|| Tabulation::new(quadrature::degree6()))
}

/// A velocity field known in closed form, with its gradient
/// (`grad[c][d] = d u_c / d x_d`).
pub trait ExactVelocity {
    fn value(&self, x: Point, t: f64) -> [f64; 2];
    fn gradient(&self, x: Point, t: f64) -> [[f64; 2]; 2];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldNorms {
    pub l2: f64,
    pub h1_semi: f64,
    pub div_l2: f64,
    pub l2_error: Option<f64>,
    pub h1_semi_error: Option<f64>,
}

/// `||u||`, `||grad u||`, `||div u||`, and when `exact` is given the L2 and
/// H1-seminorm errors at time `t`, all by 12-point quadrature.
pub fn norms(
    space: &FunctionSpace,
    u: &CoefficientVector,
    exact: Option<&dyn ExactVelocity>,
    t: f64,
) -> Result<FieldNorms> {
    space.check_velocity(u)?;
    let tab = norm_tabulation();
    let mut samples = Vec::new();
    let (mut l2, mut h1, mut dv, mut el2, mut eh1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for cell in 0..space.n_cells() {
        space.eval_velocity(u.values(), cell, tab, &mut samples);
        let area = space.geometry(cell).area;
        for (q, s) in samples.iter().enumerate() {
            let w = tab.rule.weights[q] * area;
            l2 += w * (s.u[0] * s.u[0] + s.u[1] * s.u[1]);
            h1 += w * s.grad.iter().flatten().map(|g| g * g).sum::<f64>();
            dv += w * s.div() * s.div();
            if let Some(ex) = exact {
                let ev = ex.value(s.x, t);
                let eg = ex.gradient(s.x, t);
                el2 += w * ((s.u[0] - ev[0]).powi(2) + (s.u[1] - ev[1]).powi(2));
                for c in 0..2 {
                    for d in 0..2 {
                        eh1 += w * (s.grad[c][d] - eg[c][d]).powi(2);
                    }
                }
            }
        }
    }
    Ok(FieldNorms {
        l2: l2.sqrt(),
        h1_semi: h1.sqrt(),
        div_l2: dv.sqrt(),
        l2_error: exact.map(|_| el2.sqrt()),
        h1_semi_error: exact.map(|_| eh1.sqrt()),
    })
}

/// `(u, v)` in L2 by quadrature.
pub fn velocity_l2_inner(space: &FunctionSpace, u: &CoefficientVector, v: &CoefficientVector) -> Result<f64> {
    space.check_velocity(u)?;
    space.check_velocity(v)?;
    let tab = norm_tabulation();
    let (mut us, mut vs) = (Vec::new(), Vec::new());
    let mut acc = 0.0;
    for cell in 0..space.n_cells() {
        space.eval_velocity(u.values(), cell, tab, &mut us);
        space.eval_velocity(v.values(), cell, tab, &mut vs);
        let area = space.geometry(cell).area;
        for q in 0..tab.len() {
            acc += tab.rule.weights[q] * area * (us[q].u[0] * vs[q].u[0] + us[q].u[1] * vs[q].u[1]);
        }
    }
    Ok(acc)
}

pub fn pressure_l2(space: &FunctionSpace, p: &CoefficientVector) -> Result<f64> {
    space.check_pressure(p)?;
    let tab = norm_tabulation();
    let mut acc = 0.0;
    for cell in 0..space.n_cells() {
        let dofs = space.cell_pressure_dofs(cell);
        let area = space.geometry(cell).area;
        for (q, lam) in tab.rule.points.iter().enumerate() {
            let v: f64 = (0..3).map(|k| lam[k] * p.values()[dofs[k]]).sum();
            acc += tab.rule.weights[q] * area * v * v;
        }
    }
    Ok(acc.sqrt())
}
