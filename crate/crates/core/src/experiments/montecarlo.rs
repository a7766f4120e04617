//! Monte Carlo sampling of a randomly forced problem on the unit square.
//!
//! Each member sees the body force `f(x) = A fbar(x) + sum_m xi_m phi_m(x)`
//! where `phi_m = (k^2 + l^2) sin(k pi x) sin(l pi y) e_c` runs over
//! `1 <= k, l <= kmax` and both components `c`, and the `xi_m` are i.i.d.
//! samples. The weight `k^2 + l^2` roughly equalizes the velocity response
//! of the modes. The walls are no-slip and the flow starts at rest. For each
//! ensemble size the sample average of several independent groups is
//! compared with a reference mean.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{CoefficientVector, FunctionSpace};
use crate::mesh::{generate_unit_square, Point, Tag};
use crate::stats::{statistical_error_estimate, StatErrorRow};
use crate::stepper::{EnsembleSolver, EnsembleState, ProblemData, SchemeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseLaw {
    /// Uniform on `[-sqrt 3, sqrt 3]` (unit variance).
    Uniform,
    Normal,
}

impl FromStr for NoiseLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "normal" => Ok(Self::Normal),
            _ => Err(Error::InvalidArgument(format!("unknown noise law '{s}' (uniform or normal)"))),
        }
    }
}

impl fmt::Display for NoiseLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Normal => "normal",
        })
    }
}

/// What the sample averages are compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McReference {
    /// The average of an independent ensemble of this size.
    SampleAverage(usize),
    /// The noise-free solution.
    Deterministic,
}

impl FromStr for McReference {
    type Err = Error;

    /// `deterministic` or `sample:J`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "deterministic" {
            return Ok(Self::Deterministic);
        }
        s.strip_prefix("sample:")
            .and_then(|j| j.trim().parse().ok())
            .filter(|j| *j > 0)
            .map(Self::SampleAverage)
            .ok_or_else(|| Error::InvalidArgument(format!("bad reference '{s}' (deterministic or sample:J)")))
    }
}

impl fmt::Display for McReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Deterministic => f.write_str("deterministic"),
            Self::SampleAverage(j) => write!(f, "sample:{j}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub g: usize,
    pub nu: f64,
    pub dt: f64,
    pub epsilon: Option<f64>,
    pub t_final: f64,
    pub groups: usize,
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub law: NoiseLaw,
    /// Standard deviation of every mode coefficient.
    pub noise: f64,
    /// Amplitude `A` of the deterministic part of the force.
    pub mean_force: f64,
    pub kmax: usize,
    pub reference: McReference,
    pub cfl_constant: f64,
    /// Lets the stepper double dt again after 10 accepted steps.
    pub allow_dt_growth: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            g: 8,
            nu: 1.0,
            dt: 0.0125,
            epsilon: None,
            t_final: 0.25,
            groups: 20,
            sizes: vec![2, 4, 8, 16],
            seed: 7,
            law: NoiseLaw::Normal,
            noise: 1.0,
            mean_force: 1.0,
            kmax: 3,
            reference: McReference::SampleAverage(64),
            cfl_constant: 1.0,
            allow_dt_growth: false,
        }
    }
}

impl MonteCarloConfig {
    pub fn params(&self) -> Result<SchemeParams> {
        if self.groups == 0 || self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidArgument("need at least one group and positive ensemble sizes".into()));
        }
        if self.kmax == 0 {
            return Err(Error::InvalidArgument("kmax must be at least 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise must be nonnegative, got {}", self.noise)));
        }
        let mut p = SchemeParams::new(self.nu, self.dt, self.t_final);
        p.epsilon = self.epsilon.unwrap_or(self.dt);
        p.cfl_constant = self.cfl_constant;
        p.allow_dt_growth = self.allow_dt_growth;
        p.validate()?;
        Ok(p)
    }

    pub fn n_modes(&self) -> usize {
        2 * self.kmax * self.kmax
    }

    /// Mode coefficients of one member. Every `(size, group, member)` triple
    /// has its own ChaCha stream; `size = 0` is reserved for the reference.
    pub fn sample(&self, size: usize, group: usize, member: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((size as u64) << 48) | ((group as u64) << 24) | member as u64);
        (0..self.n_modes())
            .map(|_| {
                let xi: f64 = match self.law {
                    NoiseLaw::Normal => rng.sample(StandardNormal),
                    NoiseLaw::Uniform => rng.random_range(-3f64.sqrt()..=3f64.sqrt()),
                };
                self.noise * xi
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloProblem {
    pub mean_force: f64,
    pub kmax: usize,
    /// Mode coefficients per member.
    pub coefficients: Vec<Vec<f64>>,
}

impl ProblemData for MonteCarloProblem {
    fn force(&self, member: usize, x: Point, _t: f64) -> [f64; 2] {
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let a = self.mean_force;
        let mut f = [
            a * sx * (2.0 * PI * x[1]).sin(),
            -a * (2.0 * PI * x[0]).sin() * sy,
        ];
        let c = &self.coefficients[member];
        let mut m = 0;
        for k in 1..=self.kmax {
            let skx = (k as f64 * PI * x[0]).sin();
            for l in 1..=self.kmax {
                let phi = (k * k + l * l) as f64 * skx * (l as f64 * PI * x[1]).sin();
                f[0] += c[m] * phi;
                f[1] += c[m + 1] * phi;
                m += 2;
            }
        }
        f
    }

    fn dirichlet_tags(&self) -> Vec<Tag> {
        vec![1]
    }

    fn dirichlet(&self, _member: usize, _tag: Tag, _x: Point, _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// Final-time ensemble mean for the given member coefficients.
pub fn ensemble_average(
    space: &Arc<FunctionSpace>,
    params: &SchemeParams,
    cfg: &MonteCarloConfig,
    coefficients: Vec<Vec<f64>>,
) -> Result<CoefficientVector> {
    let data = MonteCarloProblem {
        mean_force: cfg.mean_force,
        kmax: cfg.kmax,
        coefficients,
    };
    let j = data.coefficients.len();
    let mut solver = EnsembleSolver::new(space.clone(), params.clone(), &data)?;
    solver.set_monitor(false);
    let mut state = EnsembleState::new(space, vec![space.zero_velocity(); j], 0.0, params.dt0)?;
    solver.run(&mut state, &data, |_| Ok(()))?;
    Ok(state.mean().clone())
}

#[derive(Debug, Clone)]
pub struct MonteCarloOutput {
    pub space: Arc<FunctionSpace>,
    pub reference: CoefficientVector,
    /// Per ensemble size, the final-time sample average of every group.
    pub averages: Vec<(usize, Vec<CoefficientVector>)>,
    pub table: Vec<StatErrorRow>,
}

impl MonteCarloOutput {
    /// `E|Gamma(J_k)|^2 / E|Gamma(J_{k+1})|^2` for consecutive sizes.
    pub fn ratios(&self) -> Vec<f64> {
        self.table
            .windows(2)
            .map(|w| w[0].mean_sq_error / w[1].mean_sq_error)
            .collect()
    }
}

pub fn run_montecarlo(cfg: &MonteCarloConfig) -> Result<MonteCarloOutput> {
    let params = cfg.params()?;
    let space = Arc::new(FunctionSpace::new(Arc::new(generate_unit_square(cfg.g)?)));
    let reference = match cfg.reference {
        McReference::Deterministic => ensemble_average(&space, &params, cfg, vec![vec![0.0; cfg.n_modes()]])?,
        McReference::SampleAverage(j) => {
            let coeffs = (0..j).map(|m| cfg.sample(0, 0, m)).collect();
            ensemble_average(&space, &params, cfg, coeffs)?
        }
    };
    let jobs: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&j| (0..cfg.groups).map(move |g| (j, g)))
        .collect();
    let results: Vec<CoefficientVector> = jobs
        .par_iter()
        .map(|&(j, g)| {
            let coeffs = (0..j).map(|m| cfg.sample(j, g, m)).collect();
            ensemble_average(&space, &params, cfg, coeffs)
        })
        .collect::<Result<_>>()?;
    let mut it = results.into_iter();
    let averages: Vec<(usize, Vec<CoefficientVector>)> = cfg
        .sizes
        .iter()
        .map(|&j| (j, it.by_ref().take(cfg.groups).collect()))
        .collect();
    let table = statistical_error_estimate(&space, &averages, &reference)?;
    for row in &table {
        log::info!("J = {}: E|Gamma|^2 = {:e}", row.members, row.mean_sq_error);
    }
    Ok(MonteCarloOutput {
        space,
        reference,
        averages,
        table,
    })
}
