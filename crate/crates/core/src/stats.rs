//! Flow statistics, numerical dissipation rates and ensemble diagnostics.

use std::fmt;

use crate::error::{Error, Result};
use crate::fem::norms::norm_tabulation;
use crate::fem::{norms, velocity_l2_inner, CoefficientVector, FunctionSpace};
use crate::stepper::{ensemble_mean, StepReport};

/// Which field a statistics row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MemberId {
    Member(usize),
    Mean,
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemberId::Member(j) => write!(f, "{j}"),
            MemberId::Mean => f.write_str("MEAN"),
        }
    }
}

impl std::str::FromStr for MemberId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "MEAN" {
            Ok(MemberId::Mean)
        } else {
            s.parse().map(MemberId::Member)
        }
    }
}

/// One row of the statistics stream.
///
/// For member rows `spread = |u_j - mean| / |mean|` and
/// `std_dev = |u_j - mean|`. For the mean row `std_dev` is the ensemble
/// standard deviation `sqrt(1/J sum |u_j - mean|^2)` and `spread` is
/// `|u_1 - u_2| / |mean|` when J = 2, otherwise `std_dev / |mean|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatRecord {
    pub t: f64,
    pub member: MemberId,
    pub kinetic_energy: f64,
    pub enstrophy: f64,
    pub angular_momentum: f64,
    pub div_l2: f64,
    pub visc_dissip: f64,
    pub be_dissip: f64,
    pub penalty_dissip: f64,
    pub spread: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowStats {
    /// `1/2 |u|^2`
    pub kinetic_energy: f64,
    /// `1/2 nu |curl u|^2`
    pub enstrophy: f64,
    /// `|int (x u_2 - y u_1)|`
    pub angular_momentum: f64,
    pub div_l2: f64,
    /// `nu |grad u|^2`
    pub visc_dissip: f64,
}

pub fn flow_stats(space: &FunctionSpace, u: &CoefficientVector, nu: f64) -> Result<FlowStats> {
    space.check_velocity(u)?;
    let tab = norm_tabulation();
    let mut samples = Vec::new();
    let (mut ke, mut curl, mut ang, mut div, mut grad) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for cell in 0..space.n_cells() {
        space.eval_velocity(u.values(), cell, tab, &mut samples);
        let area = space.geometry(cell).area;
        for (q, s) in samples.iter().enumerate() {
            let w = tab.rule.weights[q] * area;
            ke += w * (s.u[0] * s.u[0] + s.u[1] * s.u[1]);
            let c = s.grad[1][0] - s.grad[0][1];
            curl += w * c * c;
            ang += w * (s.x[0] * s.u[1] - s.x[1] * s.u[0]);
            div += w * s.div() * s.div();
            grad += w * s.grad.iter().flatten().map(|g| g * g).sum::<f64>();
        }
    }
    Ok(FlowStats {
        kinetic_energy: 0.5 * ke,
        enstrophy: 0.5 * nu * curl,
        angular_momentum: ang.abs(),
        div_l2: div.sqrt(),
        visc_dissip: nu * grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericalDissipation {
    /// `|u_new - u_old|^2 / dt`
    pub be: f64,
    /// `|div u_new|^2 / eps`
    pub penalty: f64,
}

pub fn numerical_dissipation(
    space: &FunctionSpace,
    u_new: &CoefficientVector,
    u_old: &CoefficientVector,
    dt: f64,
    epsilon: f64,
) -> Result<NumericalDissipation> {
    if !(dt > 0.0 && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt and epsilon must be positive, got {dt} and {epsilon}"
        )));
    }
    space.check_velocity(u_old)?;
    let du = norms(space, &u_new.sub(u_old), None, 0.0)?;
    let div = norms(space, u_new, None, 0.0)?.div_l2;
    Ok(NumericalDissipation {
        be: du.l2 * du.l2 / dt,
        penalty: div * div / epsilon,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDiagnostics {
    pub mean: CoefficientVector,
    pub mean_norm: f64,
    /// `std_dev / |mean|`; zero when the mean vanishes.
    pub spread: f64,
    /// False when `|mean| = 0` and `spread` was set to zero.
    pub spread_defined: bool,
    /// `|u_1 - u_2| / |mean|` for two-member ensembles.
    pub pair_spread: Option<f64>,
    /// `sqrt(1/J sum |u_j - mean|^2)`
    pub std_dev: f64,
    /// Per-member `|u_j - mean|`.
    pub deviations: Vec<f64>,
    /// `1/J sum |u_j|^2`
    pub second_moment: f64,
    /// `|1/J sum |u_j - mean|^2 - (1/J sum |u_j|^2 - |mean|^2)|`
    pub variance_identity_residual: f64,
}

pub fn ensemble_diagnostics(space: &FunctionSpace, members: &[CoefficientVector]) -> Result<EnsembleDiagnostics> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("ensemble diagnostics need at least one member".into()));
    }
    for u in members {
        space.check_velocity(u)?;
    }
    let j = members.len() as f64;
    let mean = ensemble_mean(members.iter());
    let mean_sq = velocity_l2_inner(space, &mean, &mean)?;
    let mut deviations = Vec::with_capacity(members.len());
    let (mut var, mut second) = (0.0, 0.0);
    for u in members {
        let d = u.sub(&mean);
        let dd = velocity_l2_inner(space, &d, &d)?;
        deviations.push(dd.sqrt());
        var += dd;
        second += velocity_l2_inner(space, u, u)?;
    }
    var /= j;
    second /= j;
    let residual = (var - (second - mean_sq)).abs();
    let std_dev = var.sqrt();
    let mean_norm = mean_sq.sqrt();
    let spread_defined = mean_norm > 0.0;
    let pair_spread = match members {
        [a, b] if spread_defined => {
            let d = a.sub(b);
            Some(velocity_l2_inner(space, &d, &d)?.sqrt() / mean_norm)
        }
        _ => None,
    };
    Ok(EnsembleDiagnostics {
        mean,
        mean_norm,
        spread: if spread_defined { std_dev / mean_norm } else { 0.0 },
        spread_defined,
        pair_spread,
        std_dev,
        deviations,
        second_moment: second,
        variance_identity_residual: residual,
    })
}

/// `sqrt(1/J sum |u_j - reference|^2)`: spread about an external reference
/// such as a run with unperturbed data.
pub fn deviation_about(space: &FunctionSpace, members: &[CoefficientVector], reference: &CoefficientVector) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("no members".into()));
    }
    let mut acc = 0.0;
    for u in members {
        let d = u.sub(reference);
        acc += velocity_l2_inner(space, &d, &d)?;
    }
    Ok((acc / members.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatErrorRow {
    pub members: usize,
    pub groups: usize,
    /// Mean over groups of `|Psi - reference|^2`.
    pub mean_sq_error: f64,
}

/// For each ensemble size, the mean squared L2 distance between the
/// per-group sample averages and `reference`.
pub fn statistical_error_estimate(
    space: &FunctionSpace,
    runs: &[(usize, Vec<CoefficientVector>)],
    reference: &CoefficientVector,
) -> Result<Vec<StatErrorRow>> {
    space.check_velocity(reference)?;
    runs.iter()
        .map(|(members, averages)| {
            if averages.is_empty() {
                return Err(Error::InvalidArgument(format!("no sample averages for J = {members}")));
            }
            let mut acc = 0.0;
            for psi in averages {
                let d = psi.sub(reference);
                acc += velocity_l2_inner(space, &d, &d)?;
            }
            Ok(StatErrorRow {
                members: *members,
                groups: averages.len(),
                mean_sq_error: acc / averages.len() as f64,
            })
        })
        .collect()
}

/// Statistics rows for one accepted step: one per member, then the mean.
pub fn step_records(space: &FunctionSpace, report: &StepReport, nu: f64, epsilon: f64) -> Result<Vec<StatRecord>> {
    let state = report.state;
    let velocities: Vec<CoefficientVector> = state.velocities().cloned().collect();
    let diag = ensemble_diagnostics(space, &velocities)?;
    let mut rows = Vec::with_capacity(velocities.len() + 1);
    let row = |member, u: &CoefficientVector, old: &CoefficientVector, spread, std_dev| -> Result<StatRecord> {
        let fs = flow_stats(space, u, nu)?;
        let nd = numerical_dissipation(space, u, old, report.dt, epsilon)?;
        Ok(StatRecord {
            t: state.t,
            member,
            kinetic_energy: fs.kinetic_energy,
            enstrophy: fs.enstrophy,
            angular_momentum: fs.angular_momentum,
            div_l2: fs.div_l2,
            visc_dissip: fs.visc_dissip,
            be_dissip: nd.be,
            penalty_dissip: nd.penalty,
            spread,
            std_dev,
        })
    };
    for (j, u) in velocities.iter().enumerate() {
        let dev = diag.deviations[j];
        let spread = if diag.spread_defined { dev / diag.mean_norm } else { 0.0 };
        rows.push(row(MemberId::Member(j), u, &report.previous[j], spread, dev)?);
    }
    let old_mean = ensemble_mean(report.previous.iter());
    let spread = diag.pair_spread.unwrap_or(diag.spread);
    rows.push(row(MemberId::Mean, &diag.mean, &old_mean, spread, diag.std_dev)?);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fem::interpolate_velocity;
    use crate::mesh::generate_unit_square;

    fn space(g: usize) -> FunctionSpace {
        FunctionSpace::new(Arc::new(generate_unit_square(g).unwrap()))
    }

    #[test]
    fn uniform_flow() {
        let s = space(3);
        let st = flow_stats(&s, &interpolate_velocity(&s, |_| [1.0, 0.0]), 1.0).unwrap();
        assert!((st.kinetic_energy - 0.5).abs() < 1e-14);
        assert!(st.enstrophy < 1e-24 && st.visc_dissip < 1e-24);
    }

    #[test]
    fn rigid_rotation() {
        let s = space(4);
        let st = flow_stats(&s, &interpolate_velocity(&s, |x| [-x[1], x[0]]), 0.02).unwrap();
        assert!((st.enstrophy - 0.04).abs() < 1e-14);
        assert!((st.angular_momentum - 2.0 / 3.0).abs() < 1e-14);
        assert!(st.div_l2 < 1e-12);
    }

    #[test]
    fn zero_field() {
        let s = space(2);
        let st = flow_stats(&s, &s.zero_velocity(), 0.5).unwrap();
        assert_eq!(
            [st.kinetic_energy, st.enstrophy, st.angular_momentum, st.div_l2, st.visc_dissip],
            [0.0; 5]
        );
    }

    #[test]
    fn backward_euler_dissipation() {
        let s = space(3);
        let u = interpolate_velocity(&s, |x| [x[0], 0.0]);
        let z = s.zero_velocity();
        let d = numerical_dissipation(&s, &u, &z, 0.5, 1.0).unwrap();
        assert!((d.be - 2.0 / 3.0).abs() < 1e-14);
        assert!((d.penalty - 1.0).abs() < 1e-13);
        let same = numerical_dissipation(&s, &u, &u, 0.5, 1.0).unwrap();
        assert_eq!(same.be, 0.0);
        let rot = interpolate_velocity(&s, |x| [-x[1], x[0]]);
        let eps = 1e-3;
        assert!(numerical_dissipation(&s, &rot, &z, 1.0, eps).unwrap().penalty <= 1e-12 / eps);
    }

    #[test]
    fn two_constant_members() {
        let s = space(2);
        let a = interpolate_velocity(&s, |_| [1.0, 0.0]);
        let b = interpolate_velocity(&s, |_| [3.0, 0.0]);
        let d = ensemble_diagnostics(&s, &[a, b]).unwrap();
        assert!((d.mean_norm - 2.0).abs() < 1e-14);
        assert!((d.std_dev - 1.0).abs() < 1e-14);
        assert!(d.variance_identity_residual <= 1e-14);
        assert!((d.pair_spread.unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn equal_members_have_no_spread() {
        let s = space(2);
        let a = interpolate_velocity(&s, |x| [x[1], x[0] * x[0]]);
        let d = ensemble_diagnostics(&s, &[a.clone(), a.clone(), a]).unwrap();
        assert!(d.std_dev <= 1e-15 && d.spread <= 1e-15);
        assert!(d.variance_identity_residual <= 1e-13);
    }

    #[test]
    fn zero_mean_flags_spread() {
        let s = space(2);
        let a = interpolate_velocity(&s, |_| [1.0, 0.0]);
        let d = ensemble_diagnostics(&s, &[a.clone(), a.scaled(-1.0)]).unwrap();
        assert!(!d.spread_defined);
        assert_eq!(d.spread, 0.0);
        assert!(ensemble_diagnostics(&s, &[]).is_err());
    }

    #[test]
    fn spread_is_permutation_invariant() {
        let s = space(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m: Vec<_> = (0..5)
            .map(|_| CoefficientVector::velocity((0..s.n_velocity()).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let mut rev = m.clone();
        rev.reverse();
        let (a, b) = (ensemble_diagnostics(&s, &m).unwrap(), ensemble_diagnostics(&s, &rev).unwrap());
        assert!((a.spread - b.spread).abs() <= 1e-14 * a.spread);
    }

    #[test]
    fn deviation_about_reference() {
        let s = space(2);
        let a = interpolate_velocity(&s, |_| [1.0, 0.0]);
        let b = interpolate_velocity(&s, |_| [3.0, 0.0]);
        let r = interpolate_velocity(&s, |_| [0.0, 0.0]);
        assert!((deviation_about(&s, &[a, b], &r).unwrap() - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn error_table() {
        let s = space(2);
        let r = s.zero_velocity();
        let one = interpolate_velocity(&s, |_| [1.0, 0.0]);
        let two = interpolate_velocity(&s, |_| [2.0, 0.0]);
        let t = statistical_error_estimate(&s, &[(1, vec![one.clone()]), (2, vec![one, two])], &r).unwrap();
        assert!((t[0].mean_sq_error - 1.0).abs() < 1e-14);
        assert!((t[1].mean_sq_error - 2.5).abs() < 1e-14);
        assert_eq!(t[1].groups, 2);
    }

    #[test]
    fn member_id_text() {
        assert_eq!(MemberId::Mean.to_string(), "MEAN");
        assert_eq!("MEAN".parse::<MemberId>().unwrap(), MemberId::Mean);
        assert_eq!("7".parse::<MemberId>().unwrap(), MemberId::Member(7));
    }
}
