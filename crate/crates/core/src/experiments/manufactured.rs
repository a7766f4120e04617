//! Manufactured-solution convergence study on the unit square.
//!
//! The exact solution is `u = (e^t cos y, e^t sin x)`, `p = (x - y)(1 + t)`,
//! with the body force obtained by substituting it into the Navier-Stokes
//! equations. Members start from `(1 + delta_j) u(., 0)` and see the exact
//! boundary trace.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{interpolate_velocity, norms, ExactVelocity, FunctionSpace};
use crate::mesh::{generate_unit_square, Point, Tag};
use crate::stepper::{EnsembleSolver, EnsembleState, ProblemData, SchemeParams};

/// Exact velocity and pressure.
pub fn manufactured_solution(x: f64, y: f64, t: f64) -> ([f64; 2], f64) {
    let et = t.exp();
    ([et * y.cos(), et * x.sin()], (x - y) * (1.0 + t))
}

/// `f = u_t + u . grad u - nu lap u + grad p` for the exact solution.
pub fn manufactured_force(x: f64, y: f64, t: f64, nu: f64) -> [f64; 2] {
    let et = t.exp();
    let e2t = et * et;
    let (sx, cx, sy, cy) = (x.sin(), x.cos(), y.sin(), y.cos());
    [
        et * cy - e2t * sx * sy + nu * et * cy + (1.0 + t),
        et * sx + e2t * cx * cy + nu * et * sx - (1.0 + t),
    ]
}

/// The exact velocity as a norm reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct ManufacturedVelocity;

impl ExactVelocity for ManufacturedVelocity {
    fn value(&self, x: Point, t: f64) -> [f64; 2] {
        manufactured_solution(x[0], x[1], t).0
    }

    fn gradient(&self, x: Point, t: f64) -> [[f64; 2]; 2] {
        let et = t.exp();
        [[0.0, -et * x[1].sin()], [et * x[0].cos(), 0.0]]
    }
}

/// Problem data for the manufactured solution: the same force and boundary
/// trace for every member.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedProblem {
    pub nu: f64,
}

impl ProblemData for ManufacturedProblem {
    fn force(&self, _member: usize, x: Point, t: f64) -> [f64; 2] {
        manufactured_force(x[0], x[1], t, self.nu)
    }

    fn dirichlet_tags(&self) -> Vec<Tag> {
        vec![1]
    }

    fn dirichlet(&self, _member: usize, _tag: Tag, x: Point, t: f64) -> [f64; 2] {
        manufactured_solution(x[0], x[1], t).0
    }
}

/// `beta = ln(e1 / e2) / ln(h1 / h2)`.
pub fn convergence_rate(e1: f64, e2: f64, h1: f64, h2: f64) -> f64 {
    (e1 / e2).ln() / (h1 / h2).ln()
}

/// How the timestep follows the mesh size `h = 1/g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimestepRule {
    /// `dt = dt_factor * h`.
    #[default]
    Linear,
    /// `dt = dt_factor * h^2`.
    Quadratic,
}

impl std::str::FromStr for TimestepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(Error::InvalidArgument(format!(
                "unknown timestep rule '{other}' (expected linear or quadratic)"
            ))),
        }
    }
}

impl std::fmt::Display for TimestepRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Quadratic => "quadratic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub base_g: usize,
    pub ratio: f64,
    pub levels: usize,
    pub dt_rule: TimestepRule,
    pub dt_factor: f64,
    /// Penalty; `None` means `epsilon = dt`.
    pub epsilon: Option<f64>,
    pub nu: f64,
    pub t_final: f64,
    pub deltas: Vec<f64>,
    pub cfl_constant: f64,
    /// Lets the stepper double dt again after 10 accepted steps.
    pub allow_dt_growth: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            base_g: 27,
            ratio: 1.5,
            levels: 3,
            dt_rule: TimestepRule::Linear,
            dt_factor: 0.1,
            epsilon: None,
            nu: 1.0,
            t_final: 1.0,
            deltas: vec![1e-3, -1e-3],
            cfl_constant: 1.0,
            allow_dt_growth: false,
        }
    }
}

impl ConvergenceConfig {
    /// Grid resolutions `round(base_g * ratio^k)`, ties to even.
    pub fn grids(&self) -> Vec<usize> {
        (0..self.levels)
            .map(|k| {
                let exact = self.base_g as f64 * self.ratio.powi(k as i32);
                let g = exact.round_ties_even();
                if (g - exact).abs() > 1e-9 {
                    log::warn!("level {k}: g = {exact} is not an integer, using {g}");
                }
                g as usize
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidArgument(format!(
                "a convergence study needs at least 2 levels, got {}",
                self.levels
            )));
        }
        if self.deltas.is_empty() {
            return Err(Error::InvalidArgument("at least one member is needed".into()));
        }
        if self.base_g == 0 || !(self.ratio > 1.0 && self.ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grids need base_g >= 1 and ratio > 1, got {} and {}",
                self.base_g, self.ratio
            )));
        }
        self.params(self.base_g)?.validate()
    }

    fn params(&self, g: usize) -> Result<SchemeParams> {
        let dt = self.timestep(g);
        let mut p = SchemeParams::new(self.nu, dt, self.t_final);
        p.epsilon = self.epsilon.unwrap_or(dt);
        p.cfl_constant = self.cfl_constant;
        p.allow_dt_growth = self.allow_dt_growth;
        Ok(p)
    }

    /// Timestep on an `g x g` grid.
    pub fn timestep(&self, g: usize) -> f64 {
        let h = 1.0 / g as f64;
        match self.dt_rule {
            TimestepRule::Linear => self.dt_factor * h,
            TimestepRule::Quadratic => self.dt_factor * h * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemberErrors {
    /// `max_n |u(t_n) - u_h^n|` over `n >= 1`.
    pub max_l2: f64,
    /// `sqrt(dt sum_n |grad(u(t_n) - u_h^n)|^2)`.
    pub grad_l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceLevel {
    pub g: usize,
    pub h: f64,
    pub dt: f64,
    pub members: Vec<MemberErrors>,
    pub accepted: usize,
    pub rejected: usize,
    pub factorizations: usize,
    pub ledger_steps: usize,
    pub ledger_violations: usize,
    pub ledger_worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub levels: Vec<ConvergenceLevel>,
}

impl ConvergenceTable {
    /// `(l2 rate, gradient rate)` per member between levels `k` and `k + 1`.
    pub fn rates(&self, k: usize) -> Vec<(f64, f64)> {
        let (a, b) = (&self.levels[k], &self.levels[k + 1]);
        a.members
            .iter()
            .zip(&b.members)
            .map(|(x, y)| {
                (
                    convergence_rate(x.max_l2, y.max_l2, a.h, b.h),
                    convergence_rate(x.grad_l2, y.grad_l2, a.h, b.h),
                )
            })
            .collect()
    }
}

/// Runs one resolution of the manufactured problem.
pub fn run_convergence_level(cfg: &ConvergenceConfig, g: usize) -> Result<ConvergenceLevel> {
    if cfg.deltas.is_empty() {
        return Err(Error::InvalidArgument("at least one member is needed".into()));
    }
    let h = 1.0 / g as f64;
    let dt = cfg.timestep(g);
    let params = cfg.params(g)?;
    let space = Arc::new(FunctionSpace::new(Arc::new(generate_unit_square(g)?)));
    let data = ManufacturedProblem { nu: cfg.nu };
    let mut solver = EnsembleSolver::new(space.clone(), params, &data)?;
    let u0 = interpolate_velocity(&space, |x| manufactured_solution(x[0], x[1], 0.0).0);
    let init = cfg.deltas.iter().map(|d| u0.scaled(1.0 + d)).collect();
    let mut state = EnsembleState::new(&space, init, 0.0, dt)?;
    let mut errs = vec![MemberErrors { max_l2: 0.0, grad_l2: 0.0 }; cfg.deltas.len()];
    let summary = solver.run(&mut state, &data, |r| {
        let n: Vec<_> = r
            .state
            .velocities()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|u| norms(&space, u, Some(&ManufacturedVelocity), r.state.t))
            .collect::<Result<_>>()?;
        for (e, n) in errs.iter_mut().zip(n) {
            e.max_l2 = e.max_l2.max(n.l2_error.unwrap_or(0.0));
            e.grad_l2 += r.dt * n.h1_semi_error.unwrap_or(0.0).powi(2);
        }
        Ok(())
    })?;
    errs.iter_mut().for_each(|e| e.grad_l2 = e.grad_l2.sqrt());
    let ledger = solver.ledger();
    log::info!(
        "g = {g}: {} steps, errors {:?}, ledger ratio {:.3}",
        summary.accepted,
        errs,
        ledger.worst_ratio
    );
    Ok(ConvergenceLevel {
        g,
        h,
        dt,
        members: errs,
        accepted: summary.accepted,
        rejected: summary.rejected,
        factorizations: summary.factorizations,
        ledger_steps: ledger.steps,
        ledger_violations: ledger.violations.len(),
        ledger_worst_ratio: ledger.worst_ratio,
    })
}

pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let levels = cfg
        .grids()
        .into_iter()
        .map(|g| run_convergence_level(cfg, g))
        .collect::<Result<_>>()?;
    Ok(ConvergenceTable { levels })
}

/// Time-averaged `|div u_h|` of a single member of the manufactured
/// problem, for each penalty value, with everything else fixed.
pub fn penalty_study(g: usize, dt: f64, t_final: f64, nu: f64, epsilons: &[f64]) -> Result<Vec<f64>> {
    let space = Arc::new(FunctionSpace::new(Arc::new(generate_unit_square(g)?)));
    let data = ManufacturedProblem { nu };
    let u0 = interpolate_velocity(&space, |x| manufactured_solution(x[0], x[1], 0.0).0);
    epsilons
        .par_iter()
        .map(|&eps| {
            let mut params = SchemeParams::new(nu, dt, t_final);
            params.epsilon = eps;
            let mut solver = EnsembleSolver::new(space.clone(), params, &data)?;
            solver.set_monitor(false);
            let mut state = EnsembleState::new(&space, vec![u0.clone()], 0.0, dt)?;
            let mut acc = 0.0;
            solver.run(&mut state, &data, |r| {
                acc += r.dt * norms(&space, r.state.velocity(0), None, 0.0)?.div_l2;
                Ok(())
            })?;
            Ok(acc / t_final)
        })
        .collect()
}
