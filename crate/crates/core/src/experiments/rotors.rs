//! Two rotating cylinders inside a fixed disk.
//!
//! The disk has radius 1 and the two obstacles have radius 0.1, centred at
//! `(-1/2, 0)` and `(1/2, 0)`. The obstacles take turns driving the flow with
//! boundary velocity `5 a(t) (y, -x)`, the outer circle is at rest, and
//! members scale the boundary data by `1 + sigma_j`. A reference run with the
//! averaged boundary data is advanced in lockstep with the ensemble.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::experiments::{FieldHook, MeshSource};
use crate::fem::FunctionSpace;
use crate::mesh::{Point, Tag};
use crate::stats::{deviation_about, step_records, MemberId, StatRecord};
use crate::stepper::{
    EnsembleSolver, EnsembleState, ProblemData, RunSummary, SchemeParams, StabilityLedger, StepOutcome, StepReport,
};

pub const OUTER: Tag = 1;
pub const LEFT_ROTOR: Tag = 2;
pub const RIGHT_ROTOR: Tag = 3;

/// Alternating on/off pulses: the left rotor runs during the first half of
/// each period and the right rotor during the second half. Switching uses a
/// half-cosine ramp of width `ramp` so the boundary data stays continuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeSchedule {
    pub period: f64,
    pub ramp: f64,
}

impl Default for AmplitudeSchedule {
    fn default() -> Self {
        Self { period: 2.0, ramp: 0.05 }
    }
}

impl AmplitudeSchedule {
    fn rise(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            0.0
        } else if tau >= self.ramp {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * tau / self.ramp).cos())
        }
    }

    fn pulse(&self, t: f64, start: f64) -> f64 {
        let s = t - start;
        if s <= 0.0 {
            return 0.0;
        }
        let k = (s / self.period).floor();
        // only the current and the previous pulse can be nonzero
        [k - 1.0, k]
            .into_iter()
            .filter(|k| *k >= 0.0)
            .map(|k| {
                let on = s - k * self.period;
                self.rise(on) - self.rise(on - 0.5 * self.period)
            })
            .sum()
    }

    pub fn left(&self, t: f64) -> f64 {
        self.pulse(t, 0.0)
    }

    pub fn right(&self, t: f64) -> f64 {
        self.pulse(t, 0.5 * self.period)
    }
}

#[derive(Debug, Clone)]
pub struct RotorsProblem {
    /// `1 + sigma_j` per member.
    pub scales: Vec<f64>,
    /// The factor in front of the amplitude, 5 by default.
    pub amplitude: f64,
    pub schedule: AmplitudeSchedule,
}

impl ProblemData for RotorsProblem {
    fn force(&self, _member: usize, _x: Point, _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn force_is_zero(&self) -> bool {
        true
    }

    fn dirichlet_tags(&self) -> Vec<Tag> {
        vec![OUTER, LEFT_ROTOR, RIGHT_ROTOR]
    }

    fn dirichlet(&self, member: usize, tag: Tag, x: Point, t: f64) -> [f64; 2] {
        let a = match tag {
            LEFT_ROTOR => self.schedule.left(t),
            RIGHT_ROTOR => self.schedule.right(t),
            _ => return [0.0, 0.0],
        };
        let s = self.scales[member] * self.amplitude * a;
        [s * x[1], -s * x[0]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotorsConfig {
    pub mesh: MeshSource,
    pub nu: f64,
    pub dt: f64,
    /// `None` means `epsilon = dt`.
    pub epsilon: Option<f64>,
    pub t_final: f64,
    pub sigmas: Vec<f64>,
    pub amplitude: f64,
    pub schedule: AmplitudeSchedule,
    pub cfl_constant: f64,
    /// Lets the stepper double dt again after 10 accepted steps.
    pub allow_dt_growth: bool,
    /// Statistics are recorded every this many accepted steps and at `T`.
    pub stats_every: usize,
}

impl Default for RotorsConfig {
    /// Desk-scale settings: coarse mesh, `T = 2`.
    fn default() -> Self {
        Self {
            mesh: MeshSource::Builtin("rotors_coarse".into()),
            nu: 1.0 / 50.0,
            dt: 0.001,
            epsilon: None,
            t_final: 2.0,
            sigmas: vec![0.01, -0.02],
            amplitude: 5.0,
            schedule: AmplitudeSchedule::default(),
            cfl_constant: 1.0,
            allow_dt_growth: false,
            stats_every: 1,
        }
    }
}

impl RotorsConfig {
    /// `h = 0.05` mesh and `T = 10`.
    pub fn full() -> Self {
        Self {
            mesh: MeshSource::Builtin("rotors".into()),
            t_final: 10.0,
            ..Self::default()
        }
    }

    pub fn params(&self) -> Result<SchemeParams> {
        if self.sigmas.is_empty() {
            return Err(Error::InvalidArgument("rotors needs at least one member".into()));
        }
        if self.stats_every == 0 {
            return Err(Error::InvalidArgument("stats_every must be at least 1".into()));
        }
        if !(self.schedule.period > 0.0 && self.schedule.ramp >= 0.0 && self.schedule.ramp <= 0.5 * self.schedule.period)
        {
            return Err(Error::InvalidArgument(format!("bad amplitude schedule {:?}", self.schedule)));
        }
        let mut p = SchemeParams::new(self.nu, self.dt, self.t_final);
        p.epsilon = self.epsilon.unwrap_or(self.dt);
        p.cfl_constant = self.cfl_constant;
        p.allow_dt_growth = self.allow_dt_growth;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorsSpreadRow {
    pub t: f64,
    /// `|u_1 - u_2| / |mean|` for two members.
    pub spread: f64,
    /// `sqrt(1/J sum |u_j - u_0|^2)` with `u_0` the averaged-data run.
    pub std_about_reference: f64,
    /// `sqrt(1/J sum |u_j - mean|^2)`.
    pub std_about_mean: f64,
}

#[derive(Debug, Clone)]
pub struct RotorsOutput {
    /// Member rows and MEAN rows of the ensemble.
    pub records: Vec<StatRecord>,
    /// Rows of the averaged-data run, labelled as member 0.
    pub reference_records: Vec<StatRecord>,
    pub spread: Vec<RotorsSpreadRow>,
    pub summary: RunSummary,
    pub ledger: StabilityLedger,
    pub reference_ledger: StabilityLedger,
}

/// Runs the ensemble and the averaged-data reference side by side.
pub fn run_rotors(cfg: &RotorsConfig, hook: &mut FieldHook) -> Result<RotorsOutput> {
    let params = cfg.params()?;
    let mesh = cfg.mesh.load()?;
    for tag in [OUTER, LEFT_ROTOR, RIGHT_ROTOR] {
        if !mesh.tags().contains_key(&tag) {
            return Err(Error::MeshStructure(format!("{}: no boundary tagged {tag}", cfg.mesh)));
        }
    }
    let space = Arc::new(FunctionSpace::new(Arc::new(mesh)));
    let (nu, eps, t_final) = (params.nu, params.epsilon, params.t_final);
    let data = RotorsProblem {
        scales: cfg.sigmas.iter().map(|s| 1.0 + s).collect(),
        amplitude: cfg.amplitude,
        schedule: cfg.schedule,
    };
    let sigma0 = cfg.sigmas.iter().sum::<f64>() / cfg.sigmas.len() as f64;
    let data0 = RotorsProblem {
        scales: vec![1.0 + sigma0],
        ..data.clone()
    };
    let mut solver = EnsembleSolver::new(space.clone(), params.clone(), &data)?;
    let mut solver0 = EnsembleSolver::new(space.clone(), params, &data0)?;
    let zero = space.zero_velocity();
    let mut state = EnsembleState::new(&space, vec![zero.clone(); cfg.sigmas.len()], 0.0, cfg.dt)?;
    let mut state0 = EnsembleState::new(&space, vec![zero], 0.0, cfg.dt)?;

    let mut records = Vec::new();
    let mut reference_records = Vec::new();
    let mut spread = Vec::new();
    let summary = solver.run(&mut state, &data, |r| {
        state0.dt = r.dt;
        let previous0 = [state0.velocity(0).clone()];
        if let StepOutcome::Halved { .. } = solver0.step(&mut state0, &data0)? {
            return Err(Error::InvalidArgument("single-member reference run rejected a step".into()));
        }
        debug_assert!((state0.t - r.state.t).abs() <= 1e-9 * t_final);
        let last = t_final - r.state.t <= 1e-12 * t_final;
        if r.state.step_index % cfg.stats_every == 0 || last {
            let rows = step_records(&space, r, nu, eps)?;
            let mean_row = *rows.last().expect("step_records always emits a mean row");
            records.extend(rows);
            let report0 = StepReport {
                state: &state0,
                previous: &previous0,
                dt: r.dt,
                cfl: 0.0,
            };
            let row0 = step_records(&space, &report0, nu, eps)?
                .into_iter()
                .find(|row| row.member == MemberId::Member(0))
                .expect("member row present");
            reference_records.push(row0);
            let members: Vec<_> = r.state.velocities().cloned().collect();
            spread.push(RotorsSpreadRow {
                t: r.state.t,
                spread: mean_row.spread,
                std_about_reference: deviation_about(&space, &members, state0.velocity(0))?,
                std_about_mean: mean_row.std_dev,
            });
        }
        hook(&space, r)
    })?;
    log::info!(
        "rotors: {} steps, {} rejected, ledger worst ratio {:.3}",
        summary.accepted,
        summary.rejected,
        solver.ledger().worst_ratio
    );
    Ok(RotorsOutput {
        records,
        reference_records,
        spread,
        summary,
        ledger: solver.ledger().clone(),
        reference_ledger: solver0.ledger().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(cfg: RotorsConfig) -> RotorsConfig {
        RotorsConfig {
            t_final: 0.01,
            ..cfg
        }
    }

    #[test]
    fn schedule_alternates() {
        let s = AmplitudeSchedule::default();
        assert_eq!(s.left(0.0), 0.0);
        assert_eq!((s.left(0.5), s.right(0.5)), (1.0, 0.0));
        assert_eq!((s.left(1.5), s.right(1.5)), (0.0, 1.0));
        assert_eq!((s.left(2.5), s.right(2.5)), (1.0, 0.0));
        assert!((s.left(0.025) - 0.5).abs() < 1e-12);
        assert!((s.left(1.025) - 0.5).abs() < 1e-12 && (s.right(1.025) - 0.5).abs() < 1e-12);
        for k in 0..400 {
            let t = k as f64 * 0.0137;
            let (l, r) = (s.left(t), s.right(t));
            assert!((0.0..=1.0).contains(&l) && (0.0..=1.0).contains(&r));
            assert!(l * r <= 0.25, "t = {t}");
        }
    }

    #[test]
    fn outer_circle_is_at_rest() {
        let p = RotorsProblem {
            scales: vec![1.0],
            amplitude: 5.0,
            schedule: AmplitudeSchedule::default(),
        };
        assert_eq!(p.dirichlet(0, OUTER, [1.0, 0.0], 0.5), [0.0, 0.0]);
        let v = p.dirichlet(0, LEFT_ROTOR, [-0.5, 0.1], 0.5);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitude_stays_at_rest() {
        let cfg = short(RotorsConfig {
            amplitude: 0.0,
            ..Default::default()
        });
        let out = run_rotors(&cfg, &mut |_, _| Ok(())).unwrap();
        assert_eq!(out.summary.accepted, 10);
        for r in out.records.iter().chain(&out.reference_records) {
            assert_eq!(r.kinetic_energy, 0.0);
            assert_eq!(r.enstrophy, 0.0);
            assert_eq!(r.penalty_dissip, 0.0);
        }
    }

    #[test]
    fn identical_members_match_the_reference() {
        let cfg = short(RotorsConfig {
            sigmas: vec![0.0, 0.0],
            ..Default::default()
        });
        let mut outer_max: f64 = 0.0;
        let out = run_rotors(&cfg, &mut |space, r| {
            for &n in &space.boundary_nodes()[&OUTER] {
                for u in r.state.velocities() {
                    outer_max = outer_max.max(u.values()[n].abs()).max(u.values()[space.n_nodes() + n].abs());
                }
            }
            Ok(())
        })
        .unwrap();
        assert!(outer_max < 1e-14, "{outer_max}");
        assert!(out.records.iter().any(|r| r.kinetic_energy > 0.0));
        for row in &out.spread {
            assert_eq!(row.spread, 0.0);
            assert!(row.std_about_reference <= 1e-12, "{row:?}");
        }
        assert!(out.ledger.violations.is_empty() && out.reference_ledger.violations.is_empty());
    }
}
