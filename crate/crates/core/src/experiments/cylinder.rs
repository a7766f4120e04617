//! Channel flow past a cylinder with a Coriolis term.
//!
//! The channel is `[0, 2.2] x [0, 0.41]` with a cylinder of radius 0.05 at
//! `(0.2, 0.2)`. The inlet carries a parabolic profile with peak 1.5,
//! perturbed per member by `1 + sigma_j sin(2 pi y)`. Walls and the cylinder
//! are no-slip and the outlet is left free.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiments::{FieldHook, MeshSource};
use crate::fem::FunctionSpace;
use crate::mesh::{Point, Tag};
use crate::stats::{step_records, MemberId, StatRecord};
use crate::stepper::{EnsembleSolver, EnsembleState, ProblemData, RunSummary, SchemeParams, StabilityLedger};

pub const INLET: Tag = 1;
pub const OUTLET: Tag = 2;
pub const WALL: Tag = 3;
pub const CYLINDER: Tag = 4;

pub const CHANNEL_HEIGHT: f64 = 0.41;

/// `6 y (H - y) / H^2`.
pub fn inlet_profile(y: f64) -> f64 {
    6.0 * y * (CHANNEL_HEIGHT - y) / (CHANNEL_HEIGHT * CHANNEL_HEIGHT)
}

/// `count` values drawn uniformly from `[-max, max]`.
pub fn sample_sigmas(seed: u64, count: usize, max: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(-max..=max)).collect()
}

#[derive(Debug, Clone)]
pub struct CylinderProblem {
    pub sigmas: Vec<f64>,
}

impl ProblemData for CylinderProblem {
    fn force(&self, _member: usize, _x: Point, _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn force_is_zero(&self) -> bool {
        true
    }

    fn dirichlet_tags(&self) -> Vec<Tag> {
        // no-slip wins at the inlet corners
        vec![WALL, CYLINDER, INLET]
    }

    fn dirichlet(&self, member: usize, tag: Tag, x: Point, _t: f64) -> [f64; 2] {
        if tag != INLET {
            return [0.0, 0.0];
        }
        let y = x[1];
        let s = 1.0 + self.sigmas[member] * (2.0 * std::f64::consts::PI * y).sin();
        [s * inlet_profile(y), 0.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderConfig {
    pub mesh: MeshSource,
    pub members: usize,
    pub nu: f64,
    pub dt: f64,
    /// `None` means `epsilon = dt`.
    pub epsilon: Option<f64>,
    pub t_final: f64,
    pub omega: f64,
    pub seed: u64,
    /// Half-width of the uniform law for `sigma_j`.
    pub sigma_max: f64,
    /// Overrides the sampled perturbations when set.
    pub sigmas: Option<Vec<f64>>,
    pub cfl_constant: f64,
    /// Lets the stepper double dt again after 10 accepted steps.
    pub allow_dt_growth: bool,
    pub stats_every: usize,
}

impl Default for CylinderConfig {
    /// Desk-scale settings: coarse mesh, `T = 2`.
    fn default() -> Self {
        Self {
            mesh: MeshSource::Builtin("cylinder_coarse".into()),
            members: 10,
            nu: 0.001,
            dt: 0.002,
            epsilon: None,
            t_final: 2.0,
            omega: 10.0,
            seed: 42,
            sigma_max: 0.1,
            sigmas: None,
            cfl_constant: 1.0,
            allow_dt_growth: false,
            stats_every: 1,
        }
    }
}

impl CylinderConfig {
    pub fn full() -> Self {
        Self {
            mesh: MeshSource::Builtin("cylinder".into()),
            t_final: 10.0,
            ..Self::default()
        }
    }

    pub fn params(&self) -> Result<SchemeParams> {
        if self.members == 0 {
            return Err(Error::InvalidArgument("cylinder needs at least one member".into()));
        }
        if self.stats_every == 0 {
            return Err(Error::InvalidArgument("stats_every must be at least 1".into()));
        }
        if let Some(s) = &self.sigmas {
            if s.len() != self.members {
                return Err(Error::InvalidArgument(format!(
                    "{} perturbations given for {} members",
                    s.len(),
                    self.members
                )));
            }
        }
        let mut p = SchemeParams::new(self.nu, self.dt, self.t_final);
        p.epsilon = self.epsilon.unwrap_or(self.dt);
        p.cfl_constant = self.cfl_constant;
        p.allow_dt_growth = self.allow_dt_growth;
        p.omega = self.omega;
        p.validate()?;
        Ok(p)
    }

    pub fn resolved_sigmas(&self) -> Vec<f64> {
        self.sigmas
            .clone()
            .unwrap_or_else(|| sample_sigmas(self.seed, self.members, self.sigma_max))
    }
}

#[derive(Debug, Clone)]
pub struct CylinderOutput {
    pub omega: f64,
    pub sigmas: Vec<f64>,
    /// Member rows (spread = relative error to the mean) and MEAN rows
    /// (spread = normalized standard deviation).
    pub records: Vec<StatRecord>,
    pub summary: RunSummary,
    pub ledger: StabilityLedger,
    pub final_dt: f64,
}

impl CylinderOutput {
    /// `(t, std_dev / |mean|)` per recorded step.
    pub fn normalized_std(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter(|r| r.member == MemberId::Mean)
            .map(|r| (r.t, r.spread))
            .collect()
    }

    pub fn final_normalized_std(&self) -> Option<f64> {
        self.normalized_std().last().map(|(_, s)| *s)
    }
}

pub fn run_cylinder(cfg: &CylinderConfig, hook: &mut FieldHook) -> Result<CylinderOutput> {
    let params = cfg.params()?;
    let mesh = cfg.mesh.load()?;
    for tag in [INLET, OUTLET, WALL, CYLINDER] {
        if !mesh.tags().contains_key(&tag) {
            return Err(Error::MeshStructure(format!("{}: no boundary tagged {tag}", cfg.mesh)));
        }
    }
    let space = Arc::new(FunctionSpace::new(Arc::new(mesh)));
    let sigmas = cfg.resolved_sigmas();
    let data = CylinderProblem { sigmas: sigmas.clone() };
    let (nu, eps, t_final) = (params.nu, params.epsilon, params.t_final);
    let mut solver = EnsembleSolver::new(space.clone(), params, &data)?;
    let mut state = EnsembleState::new(&space, vec![space.zero_velocity(); cfg.members], 0.0, cfg.dt)?;
    let mut records = Vec::new();
    let summary = solver.run(&mut state, &data, |r| {
        let last = t_final - r.state.t <= 1e-12 * t_final;
        if r.state.step_index % cfg.stats_every == 0 || last {
            records.extend(step_records(&space, r, nu, eps)?);
        }
        hook(&space, r)
    })?;
    log::info!(
        "cylinder omega = {}: {} steps, {} halvings, final dt {}",
        cfg.omega,
        summary.accepted,
        summary.rejected,
        state.dt
    );
    Ok(CylinderOutput {
        omega: cfg.omega,
        sigmas,
        records,
        summary,
        ledger: solver.ledger().clone(),
        final_dt: state.dt,
    })
}

/// Independent runs for several rotation rates with the same perturbations.
pub fn run_cylinder_sweep(cfg: &CylinderConfig, omegas: &[f64]) -> Result<Vec<CylinderOutput>> {
    omegas
        .par_iter()
        .map(|&omega| {
            let c = CylinderConfig { omega, ..cfg.clone() };
            run_cylinder(&c, &mut |_, _| Ok(()))
        })
        .collect()
}
