//! Penalty-based ensemble time stepping.
//!
//! Every member is advanced by linearly implicit backward Euler in which the
//! implicit convection is linearized about the ensemble mean and the member
//! fluctuation is transported explicitly. The implicit operator is
//!
//! ```text
//! [ M/dt + nu K + N(mean) + omega C   -B^T  ] [u]
//! [ B                                 eps Mp] [p]
//! ```
//!
//! which does not depend on the member, so each step factorizes it once and
//! back-substitutes J right-hand sides. A step is only attempted when every
//! member passes the fluctuation CFL test; otherwise the timestep is halved.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::assembly::{assembly_tabulation, convection_cell_matrix};
use crate::fem::{
    apply_fluctuation_convection, assemble_constant_operators, assemble_load, CoefficientVector,
    ConstantOperators, FunctionSpace,
};
use crate::linalg::{dot, Factorization, Factorizer, Pattern, SparseMatrix};
use crate::mesh::{mesh_size, Point, Tag};

/// Scheme parameters shared by all members.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    pub nu: f64,
    pub epsilon: f64,
    pub dt0: f64,
    pub t_final: f64,
    /// Constant `C` in `C dt / (nu h) |grad U_j|^2 <= 1`. Zero turns the
    /// halving gate off and keeps dt pinned.
    pub cfl_constant: f64,
    /// Coriolis coefficient.
    pub omega: f64,
    pub dt_min: f64,
    /// Double dt (up to `dt0`) after 10 consecutive accepted steps.
    pub allow_dt_growth: bool,
}

impl SchemeParams {
    /// Parameters with `epsilon = dt`, `C = 1`, no rotation and
    /// `dt_min = dt / 2^20`.
    pub fn new(nu: f64, dt: f64, t_final: f64) -> Self {
        Self {
            nu,
            epsilon: dt,
            dt0: dt,
            t_final,
            cfl_constant: 1.0,
            omega: 0.0,
            dt_min: dt / f64::from(1u32 << 20),
            allow_dt_growth: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let finite = [
            self.nu,
            self.epsilon,
            self.dt0,
            self.t_final,
            self.cfl_constant,
            self.omega,
            self.dt_min,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("scheme parameters must be finite".into());
        }
        if self.nu <= 0.0 {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if self.epsilon <= 0.0 {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.cfl_constant < 0.0 {
            return bad(format!("cfl_constant must be nonnegative, got {}", self.cfl_constant));
        }
        if self.omega < 0.0 {
            return bad(format!("omega must be nonnegative, got {}", self.omega));
        }
        if !(0.0 < self.dt_min && self.dt_min <= self.dt0 && self.dt0 <= self.t_final) {
            return bad(format!(
                "need 0 < dt_min <= dt0 <= T, got dt_min = {}, dt0 = {}, T = {}",
                self.dt_min, self.dt0, self.t_final
            ));
        }
        Ok(())
    }
}

/// Member-dependent data: body forces and Dirichlet boundary values.
pub trait ProblemData: Sync {
    fn force(&self, member: usize, x: Point, t: f64) -> [f64; 2];

    /// Lets the solver skip load assembly for unforced problems.
    fn force_is_zero(&self) -> bool {
        false
    }

    /// Boundary tags carrying Dirichlet data. A node on several tagged edges
    /// takes its value from the first tag listed.
    fn dirichlet_tags(&self) -> Vec<Tag>;

    fn dirichlet(&self, member: usize, tag: Tag, x: Point, t: f64) -> [f64; 2];
}

/// J velocity/pressure pairs sharing one space, with their cached mean.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    members: Vec<(CoefficientVector, CoefficientVector)>,
    mean: CoefficientVector,
    pub t: f64,
    pub dt: f64,
    pub step_index: usize,
}

impl EnsembleState {
    /// Members start from the given velocities with zero pressure.
    pub fn new(space: &FunctionSpace, velocities: Vec<CoefficientVector>, t: f64, dt: f64) -> Result<Self> {
        if velocities.is_empty() {
            return Err(Error::InvalidArgument("an ensemble needs at least one member".into()));
        }
        for u in &velocities {
            space.check_velocity(u)?;
        }
        let members: Vec<_> = velocities.into_iter().map(|u| (u, space.zero_pressure())).collect();
        let mean = ensemble_mean(members.iter().map(|m| &m.0));
        Ok(Self {
            members,
            mean,
            t,
            dt,
            step_index: 0,
        })
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[(CoefficientVector, CoefficientVector)] {
        &self.members
    }

    pub fn velocity(&self, j: usize) -> &CoefficientVector {
        &self.members[j].0
    }

    pub fn pressure(&self, j: usize) -> &CoefficientVector {
        &self.members[j].1
    }

    pub fn velocities(&self) -> impl Iterator<Item = &CoefficientVector> {
        self.members.iter().map(|m| &m.0)
    }

    pub fn mean(&self) -> &CoefficientVector {
        &self.mean
    }

    /// Replaces all member fields and refreshes the mean.
    pub fn set_members(&mut self, members: Vec<(CoefficientVector, CoefficientVector)>) -> Result<()> {
        if members.len() != self.members.len() {
            return Err(Error::Dimension(format!(
                "{} members given for an ensemble of {}",
                members.len(),
                self.members.len()
            )));
        }
        self.members = members;
        self.mean = ensemble_mean(self.members.iter().map(|m| &m.0));
        Ok(())
    }
}

/// Arithmetic mean, summed in member order.
pub fn ensemble_mean<'a>(mut members: impl Iterator<Item = &'a CoefficientVector>) -> CoefficientVector {
    let first = members.next().expect("nonempty ensemble");
    let mut acc = first.values().to_vec();
    let mut count = 1usize;
    for u in members {
        for (a, b) in acc.iter_mut().zip(u.values()) {
            *a += b;
        }
        count += 1;
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    CoefficientVector::velocity(acc)
}

/// `C dt / (nu h) |grad U|^2`.
pub fn cfl_value(cfl_constant: f64, dt: f64, nu: f64, h: f64, grad_sq: f64) -> f64 {
    cfl_constant * dt / (nu * h) * grad_sq
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflReport {
    pub pass: bool,
    pub worst_member: usize,
    pub worst_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Accepted { dt: f64, cfl: f64 },
    Halved { dt: f64, worst_member: usize, worst_value: f64 },
}

/// Running terms of the energy bound for one member. The left side is
///
/// `1/2 |u^N|^2 + 1/4 sum |u^{n+1} - u^n|^2 + nu dt/4 |grad u^N|^2
///  + sum dt/eps |P(div u^{n+1})|^2 + nu/4 sum dt |grad u^{n+1}|^2`
///
/// and the right side is
///
/// `sum dt/(2 nu) C_PF^2 |f^{n+1}|^2 + 1/2 |u^0|^2 + nu dt_0/4 |grad u^0|^2`
///
/// plus the work done through Dirichlet boundaries, which vanishes for
/// homogeneous data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemberLedger {
    pub kinetic: f64,
    pub increments: f64,
    pub gradient_final: f64,
    pub penalty: f64,
    pub gradient_sum: f64,
    pub force: f64,
    pub initial: f64,
    pub boundary: f64,
    /// Compensates the telescoped gradient term when dt grows.
    pub growth: f64,
}

impl MemberLedger {
    pub fn lhs(&self) -> f64 {
        self.kinetic + self.increments + self.gradient_final + self.penalty + self.gradient_sum
    }

    pub fn rhs(&self) -> f64 {
        self.force + self.initial + self.boundary + self.growth
    }

    pub fn holds(&self) -> bool {
        let scale = self.lhs().abs().max(self.rhs().abs()).max(self.initial);
        self.lhs() <= self.rhs() + 1e-12 * scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerViolation {
    pub step: usize,
    pub member: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StabilityLedger {
    pub members: Vec<MemberLedger>,
    pub steps: usize,
    pub violations: Vec<LedgerViolation>,
    /// Largest `lhs / rhs` seen.
    pub worst_ratio: f64,
    last_dt: Option<f64>,
    last_grad: Vec<f64>,
}

impl StabilityLedger {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Reported to observers after every accepted step.
#[derive(Debug)]
pub struct StepReport<'a> {
    pub state: &'a EnsembleState,
    /// Member velocities before the step.
    pub previous: &'a [CoefficientVector],
    pub dt: f64,
    pub cfl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub factorizations: usize,
    pub solves: usize,
}

struct Scatter {
    /// `(system position, operator value index)` pairs per operator.
    mass: Vec<usize>,
    stiffness: Vec<usize>,
    rotation: Vec<usize>,
    divergence: Vec<usize>,
    divergence_t: Vec<usize>,
    pressure_mass: Vec<usize>,
    /// `[cell][comp][i][j]` positions of the convection block.
    convection: Vec<[[[usize; 6]; 6]; 2]>,
}

/// Owns the operators and the fixed system layout for one space and one set
/// of scheme parameters.
pub struct EnsembleSolver {
    space: Arc<FunctionSpace>,
    params: SchemeParams,
    ops: ConstantOperators,
    pattern: Arc<Pattern>,
    scatter: Scatter,
    /// `(node, tag)` for every Dirichlet node, in dof order.
    dirichlet_nodes: Vec<(usize, Tag)>,
    dirichlet_tags: Vec<Tag>,
    dirichlet_rows: Vec<usize>,
    factorizer: Factorizer,
    pressure_mass_lu: Factorization,
    h: f64,
    poincare: f64,
    base_dt: Option<f64>,
    base_values: Vec<f64>,
    /// Unreplaced system entries of the Dirichlet rows, row by row.
    dirichlet_backup: Vec<f64>,
    solves: usize,
    accepted_streak: usize,
    ledger: StabilityLedger,
    monitor: bool,
}

impl EnsembleSolver {
    pub fn new(space: Arc<FunctionSpace>, params: SchemeParams, data: &dyn ProblemData) -> Result<Self> {
        params.validate()?;
        let ops = assemble_constant_operators(&space);
        let nv = space.n_velocity();
        let np = space.n_pressure();
        let n = space.n_nodes();
        let dim = nv + np;

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dim];
        for m in [&ops.mass, &ops.stiffness, &ops.rotation] {
            for (r, row) in rows.iter_mut().enumerate().take(nv) {
                row.extend(m.row(r).map(|(c, _)| c));
            }
        }
        for r in 0..np {
            for (c, _) in ops.divergence.row(r) {
                rows[nv + r].push(c);
                rows[c].push(nv + r);
            }
            rows[nv + r].extend(ops.pressure_mass.row(r).map(|(c, _)| nv + c));
        }
        let pattern = Arc::new(Pattern::from_rows(dim, rows));

        let positions = |m: &SparseMatrix, dr: usize, dc: usize, transpose: bool| -> Vec<usize> {
            let mut out = Vec::with_capacity(m.nnz());
            for r in 0..m.n_rows() {
                for (c, _) in m.row(r) {
                    let (i, j) = if transpose { (c + dr, r + dc) } else { (r + dr, c + dc) };
                    out.push(pattern.position(i, j).expect("entry in system pattern"));
                }
            }
            out
        };
        let convection = (0..space.n_cells())
            .map(|cell| {
                let nodes = space.cell_nodes(cell);
                std::array::from_fn(|c| {
                    std::array::from_fn(|i| {
                        std::array::from_fn(|j| {
                            pattern
                                .position(nodes[i] + c * n, nodes[j] + c * n)
                                .expect("convection entry in pattern")
                        })
                    })
                })
            })
            .collect();
        let scatter = Scatter {
            mass: positions(&ops.mass, 0, 0, false),
            stiffness: positions(&ops.stiffness, 0, 0, false),
            rotation: positions(&ops.rotation, 0, 0, false),
            divergence: positions(&ops.divergence, nv, 0, false),
            divergence_t: positions(&ops.divergence, 0, nv, true),
            pressure_mass: positions(&ops.pressure_mass, nv, nv, false),
            convection,
        };

        let dirichlet_tags = data.dirichlet_tags();
        let mut owner: Vec<Option<Tag>> = vec![None; n];
        for tag in &dirichlet_tags {
            let nodes = space.boundary_nodes().get(tag).ok_or_else(|| {
                Error::InvalidArgument(format!("mesh has no boundary edges tagged {tag}"))
            })?;
            for &node in nodes {
                owner[node].get_or_insert(*tag);
            }
        }
        let dirichlet_nodes: Vec<(usize, Tag)> = owner
            .iter()
            .enumerate()
            .filter_map(|(node, t)| t.map(|t| (node, t)))
            .collect();
        let dirichlet_rows: Vec<usize> = (0..2)
            .flat_map(|c| dirichlet_nodes.iter().map(move |&(node, _)| node + c * n))
            .collect();

        let pressure_mass_lu = crate::linalg::factorize(&ops.pressure_mass)?;
        let h = mesh_size(space.mesh())?;
        let poincare = space.mesh().diameter();
        let nnz = pattern.nnz();
        Ok(Self {
            space,
            params,
            ops,
            pattern,
            scatter,
            dirichlet_nodes,
            dirichlet_tags,
            dirichlet_rows,
            factorizer: Factorizer::new(),
            pressure_mass_lu,
            h,
            poincare,
            base_dt: None,
            base_values: vec![0.0; nnz],
            dirichlet_backup: Vec::new(),
            solves: 0,
            accepted_streak: 0,
            ledger: StabilityLedger::default(),
            monitor: true,
        })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn operators(&self) -> &ConstantOperators {
        &self.ops
    }

    /// Mesh size used in the CFL test (longest edge).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dirichlet_tags(&self) -> &[Tag] {
        &self.dirichlet_tags
    }

    /// Velocity dofs constrained by Dirichlet data.
    pub fn dirichlet_rows(&self) -> &[usize] {
        &self.dirichlet_rows
    }

    pub fn factorization_count(&self) -> usize {
        self.factorizer.factorization_count()
    }

    /// Back-substitutions against step matrices so far.
    pub fn solve_count(&self) -> usize {
        self.solves
    }

    pub fn ledger(&self) -> &StabilityLedger {
        &self.ledger
    }

    pub fn reset_ledger(&mut self) {
        self.ledger = StabilityLedger::default();
    }

    /// Turns the stability ledger on or off (on by default).
    pub fn set_monitor(&mut self, on: bool) {
        self.monitor = on;
    }

    fn refresh_base(&mut self, dt: f64) {
        if self.base_dt == Some(dt) {
            return;
        }
        let v = &mut self.base_values;
        v.iter_mut().for_each(|x| *x = 0.0);
        let (nu, eps, omega) = (self.params.nu, self.params.epsilon, self.params.omega);
        let s = &self.scatter;
        for (&pos, &a) in s.mass.iter().zip(self.ops.mass.values()) {
            v[pos] += a / dt;
        }
        for (&pos, &a) in s.stiffness.iter().zip(self.ops.stiffness.values()) {
            v[pos] += nu * a;
        }
        if omega != 0.0 {
            for (&pos, &a) in s.rotation.iter().zip(self.ops.rotation.values()) {
                v[pos] += omega * a;
            }
        }
        for (&pos, &a) in s.divergence.iter().zip(self.ops.divergence.values()) {
            v[pos] += a;
        }
        for (&pos, &a) in s.divergence_t.iter().zip(self.ops.divergence.values()) {
            v[pos] -= a;
        }
        for (&pos, &a) in s.pressure_mass.iter().zip(self.ops.pressure_mass.values()) {
            v[pos] += eps * a;
        }
        self.base_dt = Some(dt);
    }

    /// The shared system matrix for the given mean and timestep, with
    /// Dirichlet rows replaced by identity rows.
    pub fn build_system(&mut self, mean: &CoefficientVector, dt: f64) -> Result<SparseMatrix> {
        self.space.check_velocity(mean)?;
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        self.refresh_base(dt);
        let mut values = self.base_values.clone();
        let mut samples = Vec::new();
        for cell in 0..self.space.n_cells() {
            let m = convection_cell_matrix(&self.space, mean.values(), cell, &mut samples);
            let pos = &self.scatter.convection[cell];
            for c in 0..2 {
                for i in 0..6 {
                    for j in 0..6 {
                        values[pos[c][i][j]] += m[i][j];
                    }
                }
            }
        }
        let offsets = self.pattern.row_offsets();
        self.dirichlet_backup.clear();
        for &r in &self.dirichlet_rows {
            let (s, e) = (offsets[r], offsets[r + 1]);
            self.dirichlet_backup.extend_from_slice(&values[s..e]);
            values[s..e].iter_mut().for_each(|x| *x = 0.0);
            let d = self.pattern.position(r, r).expect("diagonal in pattern");
            values[d] = 1.0;
        }
        SparseMatrix::new(self.pattern.clone(), values)
    }

    /// Momentum right-hand side of one member before boundary replacement:
    /// `M u^n / dt + (f(t + dt), v) - b*(u^n - mean, u^n, v)`, with zero
    /// pressure rows.
    pub fn raw_rhs(&self, state: &EnsembleState, member: usize, dt: f64, data: &dyn ProblemData) -> Result<Vec<f64>> {
        let u = state.velocity(member);
        let nv = self.space.n_velocity();
        let mut rhs = self.ops.mass.mul_vec(u.values());
        rhs.iter_mut().for_each(|x| *x /= dt);
        if !data.force_is_zero() {
            let t1 = state.t + dt;
            let load = assemble_load(&self.space, |x| data.force(member, x, t1));
            for (r, l) in rhs.iter_mut().zip(&load) {
                *r += l;
            }
        }
        if state.n_members() > 1 {
            let fluct = u.sub(state.mean());
            let conv = apply_fluctuation_convection(&self.space, &fluct, u)?;
            for (r, c) in rhs.iter_mut().zip(conv.values()) {
                *r -= c;
            }
        }
        rhs.resize(nv + self.space.n_pressure(), 0.0);
        Ok(rhs)
    }

    fn apply_dirichlet(&self, rhs: &mut [f64], member: usize, t: f64, data: &dyn ProblemData) {
        let n = self.space.n_nodes();
        let coords = self.space.node_coords();
        for &(node, tag) in &self.dirichlet_nodes {
            let g = data.dirichlet(member, tag, coords[node], t);
            rhs[node] = g[0];
            rhs[node + n] = g[1];
        }
    }

    /// Full right-hand side of one member with boundary values at `t + dt`.
    pub fn build_rhs(&self, state: &EnsembleState, member: usize, dt: f64, data: &dyn ProblemData) -> Result<Vec<f64>> {
        let mut rhs = self.raw_rhs(state, member, dt, data)?;
        self.apply_dirichlet(&mut rhs, member, state.t + dt, data);
        Ok(rhs)
    }

    /// Squared H1 seminorm `|grad v|^2 = v^T K v`.
    pub fn grad_sq(&self, v: &CoefficientVector) -> f64 {
        self.ops.stiffness.bilinear(v.values(), v.values())
    }

    pub fn cfl_check(&self, state: &EnsembleState, dt: f64) -> CflReport {
        let mut report = CflReport {
            pass: true,
            worst_member: 0,
            worst_value: 0.0,
        };
        if state.n_members() == 1 {
            return report;
        }
        for (j, u) in state.velocities().enumerate() {
            let g = self.grad_sq(&u.sub(state.mean()));
            let value = cfl_value(self.params.cfl_constant, dt, self.params.nu, self.h, g);
            if value > report.worst_value {
                report.worst_value = value;
                report.worst_member = j;
            }
        }
        report.pass = report.worst_value <= 1.0;
        report
    }

    /// Timestep the next attempt will use: the current dt, clipped so the
    /// run lands on `T`.
    fn attempt_dt(&self, state: &EnsembleState) -> (f64, bool) {
        let remaining = self.params.t_final - state.t;
        if remaining <= state.dt * (1.0 + 1e-9) {
            (remaining, true)
        } else {
            (state.dt, false)
        }
    }

    /// One attempted step.
    pub fn step(&mut self, state: &mut EnsembleState, data: &dyn ProblemData) -> Result<StepOutcome> {
        self.step_with(state, data, &mut |_| Ok(()))
    }

    fn step_with(
        &mut self,
        state: &mut EnsembleState,
        data: &dyn ProblemData,
        observer: &mut dyn FnMut(&StepReport) -> Result<()>,
    ) -> Result<StepOutcome> {
        if state.n_members() == 0 {
            return Err(Error::InvalidArgument("empty ensemble".into()));
        }
        let (dt, clipped) = self.attempt_dt(state);
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "no time left to step: t = {}, T = {}",
                state.t, self.params.t_final
            )));
        }
        let cfl = self.cfl_check(state, dt);
        if !cfl.pass {
            let new_dt = dt / 2.0;
            self.accepted_streak = 0;
            if new_dt < self.params.dt_min {
                return Err(Error::TimestepUnderflow {
                    dt: new_dt,
                    dt_min: self.params.dt_min,
                    t: state.t,
                    member: cfl.worst_member,
                    value: cfl.worst_value,
                });
            }
            log::debug!(
                "t = {}: CFL value {} on member {}, halving dt to {}",
                state.t,
                cfl.worst_value,
                cfl.worst_member,
                new_dt
            );
            state.dt = new_dt;
            return Ok(StepOutcome::Halved {
                dt: new_dt,
                worst_member: cfl.worst_member,
                worst_value: cfl.worst_value,
            });
        }

        let system = self.build_system(state.mean(), dt)?;
        let diverged = |what: &str| Error::Diverged {
            t: state.t,
            step: state.step_index,
            what: what.to_string(),
        };
        if !system.values().iter().all(|v| v.is_finite()) {
            return Err(diverged("non-finite entries in the system matrix"));
        }
        let lu = self.factorizer.factorize(&system)?;
        let raw: Vec<Vec<f64>> = (0..state.n_members())
            .into_par_iter()
            .map(|j| self.raw_rhs(state, j, dt, data))
            .collect::<Result<_>>()?;
        let t1 = state.t + dt;
        let rhs: Vec<Vec<f64>> = raw
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let mut b = r.clone();
                self.apply_dirichlet(&mut b, j, t1, data);
                b
            })
            .collect();
        let solutions = lu.solve_many(&rhs)?;
        self.solves += lu.solve_count();
        self.factorizer.recycle(lu);
        if !solutions.iter().flatten().all(|v| v.is_finite()) {
            return Err(diverged("non-finite solution"));
        }

        let nv = self.space.n_velocity();
        let previous: Vec<CoefficientVector> = state.velocities().cloned().collect();
        let members: Vec<(CoefficientVector, CoefficientVector)> = solutions
            .into_iter()
            .map(|mut x| {
                let p = x.split_off(nv);
                (CoefficientVector::velocity(x), CoefficientVector::pressure(p))
            })
            .collect();

        if self.monitor {
            self.update_ledger(state, &previous, &members, &raw, dt, data, &system)?;
        }

        state.set_members(members)?;
        state.t = if clipped { self.params.t_final } else { t1 };
        state.step_index += 1;
        self.accepted_streak += 1;
        if self.params.allow_dt_growth && self.accepted_streak >= 10 && state.dt < self.params.dt0 {
            state.dt = (2.0 * state.dt).min(self.params.dt0);
            self.accepted_streak = 0;
        }
        observer(&StepReport {
            state,
            previous: &previous,
            dt,
            cfl: cfl.worst_value,
        })?;
        Ok(StepOutcome::Accepted {
            dt,
            cfl: cfl.worst_value,
        })
    }

    /// Advances until `t = T`, calling `observer` after every accepted step.
    pub fn run(
        &mut self,
        state: &mut EnsembleState,
        data: &dyn ProblemData,
        mut observer: impl FnMut(&StepReport) -> Result<()>,
    ) -> Result<RunSummary> {
        self.reset_ledger();
        let f0 = self.factorization_count();
        let s0 = self.solves;
        let (mut accepted, mut rejected) = (0, 0);
        let t_final = self.params.t_final;
        while state.t < t_final && t_final - state.t > 1e-12 * t_final {
            match self.step_with(state, data, &mut observer)? {
                StepOutcome::Accepted { .. } => accepted += 1,
                StepOutcome::Halved { .. } => rejected += 1,
            }
        }
        Ok(RunSummary {
            accepted,
            rejected,
            factorizations: self.factorization_count() - f0,
            solves: self.solves - s0,
        })
    }

    /// `|P_Q div u|`, from `Mp q = B u`.
    pub fn projected_divergence(&self, u: &CoefficientVector) -> Result<f64> {
        let bu = self.ops.divergence.mul_vec(u.values());
        let q = self.pressure_mass_lu.solve(&bu)?;
        Ok(self.ops.pressure_mass.bilinear(&q, &q).max(0.0).sqrt())
    }

    fn force_l2_sq(&self, member: usize, t: f64, data: &dyn ProblemData) -> f64 {
        if data.force_is_zero() {
            return 0.0;
        }
        let tab = assembly_tabulation();
        let mut acc = 0.0;
        for cell in 0..self.space.n_cells() {
            let geo = self.space.geometry(cell);
            for (q, lam) in tab.rule.points.iter().enumerate() {
                let f = data.force(member, geo.map(lam), t);
                acc += tab.rule.weights[q] * geo.area * (f[0] * f[0] + f[1] * f[1]);
            }
        }
        acc
    }

    #[allow(clippy::too_many_arguments)]
    fn update_ledger(
        &mut self,
        state: &EnsembleState,
        previous: &[CoefficientVector],
        members: &[(CoefficientVector, CoefficientVector)],
        raw: &[Vec<f64>],
        dt: f64,
        data: &dyn ProblemData,
        system: &SparseMatrix,
    ) -> Result<()> {
        let (nu, eps) = (self.params.nu, self.params.epsilon);
        let j_count = members.len();
        if self.ledger.members.is_empty() {
            self.ledger.members = previous
                .iter()
                .map(|u| MemberLedger {
                    initial: 0.5 * self.ops.mass.bilinear(u.values(), u.values())
                        + 0.25 * nu * dt * self.grad_sq(u),
                    ..Default::default()
                })
                .collect();
            self.ledger.last_grad = previous.iter().map(|u| self.grad_sq(u)).collect();
        }
        let t1 = state.t + dt;
        let terms: Vec<[f64; 6]> = (0..j_count)
            .into_par_iter()
            .map(|j| -> Result<[f64; 6]> {
                let u = &members[j].0;
                let x = u.values();
                let du = u.sub(&previous[j]);
                let kinetic = 0.5 * self.ops.mass.bilinear(x, x);
                let incr = self.ops.mass.bilinear(du.values(), du.values());
                let grad = self.grad_sq(u);
                let pdiv = self.projected_divergence(u)?;
                let force = self.force_l2_sq(j, t1, data);
                // Work through Dirichlet rows: u^T (A x - b) restricted to the
                // constrained rows, minus the convective boundary flux
                // b*(u_j^n, u, u).
                let mut work = 0.0;
                let offsets = system.row_offsets();
                let cols = system.col_indices();
                let mut full = x.to_vec();
                full.extend_from_slice(members[j].1.values());
                let mut k = 0;
                for &r in &self.dirichlet_rows {
                    let mut ax = 0.0;
                    for p in offsets[r]..offsets[r + 1] {
                        ax += self.dirichlet_backup[k] * full[cols[p]];
                        k += 1;
                    }
                    work += x[r] * (ax - raw[j][r]);
                }
                let flux = dot(apply_fluctuation_convection(&self.space, &previous[j], u)?.values(), x);
                Ok([kinetic, incr, grad, pdiv, force, work - flux])
            })
            .collect::<Result<_>>()?;
        let growth_dt = self.ledger.last_dt.map_or(0.0, |last| (dt - last).max(0.0));
        let cpf2 = self.poincare * self.poincare;
        let step = self.ledger.steps;
        for (j, [kinetic, incr, grad, pdiv, force, power]) in terms.into_iter().enumerate() {
            let m = &mut self.ledger.members[j];
            m.kinetic = kinetic;
            m.increments += 0.25 * incr;
            m.gradient_final = 0.25 * nu * dt * grad;
            m.penalty += dt / eps * pdiv * pdiv;
            m.gradient_sum += 0.25 * nu * dt * grad;
            m.force += dt / (2.0 * nu) * cpf2 * force;
            m.boundary += dt * power;
            m.growth += growth_dt * 0.25 * nu * self.ledger.last_grad[j];
            self.ledger.last_grad[j] = grad;
            let (lhs, rhs) = (m.lhs(), m.rhs());
            if rhs != 0.0 {
                self.ledger.worst_ratio = self.ledger.worst_ratio.max(lhs / rhs);
            }
            if !m.holds() {
                log::warn!("stability bound violated at step {step}, member {j}: {lhs} > {rhs}");
                self.ledger.violations.push(LedgerViolation {
                    step,
                    member: j,
                    lhs,
                    rhs,
                });
            }
        }
        self.ledger.steps += 1;
        self.ledger.last_dt = Some(dt);
        Ok(())
    }
}
