//! Scenario dispatch and output files.

use std::path::Path;
use std::time::Instant;

use penflow::experiments::cylinder::run_cylinder;
use penflow::experiments::manufactured::{run_convergence, ConvergenceConfig};
use penflow::experiments::montecarlo::run_montecarlo;
use penflow::experiments::rotors::run_rotors;
use penflow::experiments::FieldHook;
use penflow::io::{format_float, write_csv, write_stats_csv, write_vtk, RunConfig, ScenarioConfig};
use penflow::stepper::{RunSummary, StabilityLedger};
use penflow::{CoefficientVector, Error, FunctionSpace, Result};

use crate::VERSION;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resolved = format!("# penflow {VERSION}\n{}", cfg.to_config_text());
    write_file(&out.join("config.resolved"), &resolved)?;
    let start = Instant::now();
    match &cfg.scenario {
        ScenarioConfig::Converge(c) => {
            if cfg.vtk_every > 0 {
                log::warn!("vtk_every is ignored by the convergence study");
            }
            converge(c, out)?
        }
        ScenarioConfig::Rotors(c) => {
            let mut hook = vtk_hook(out, cfg.vtk_every)?;
            let r = run_rotors(c, &mut *hook)?;
            write_stats_csv(&r.records, &out.join("stats.csv"))?;
            write_stats_csv(&r.reference_records, &out.join("reference_stats.csv"))?;
            write_csv(
                &out.join("spread.csv"),
                &["t", "spread", "std_about_reference", "std_about_mean"],
                r.spread.iter().map(|s| {
                    [s.t, s.spread, s.std_about_reference, s.std_about_mean].map(format_float)
                }),
            )?;
            let mut text = summary_text(&r.summary, &r.ledger);
            text.push_str(&format!(
                "reference_ledger_violations = {}\nreference_ledger_worst_ratio = {}\n",
                r.reference_ledger.violations.len(),
                format_float(r.reference_ledger.worst_ratio)
            ));
            write_file(&out.join("summary.txt"), &text)?;
        }
        ScenarioConfig::Cylinder(c) => {
            let mut hook = vtk_hook(out, cfg.vtk_every)?;
            let r = run_cylinder(c, &mut *hook)?;
            write_stats_csv(&r.records, &out.join("stats.csv"))?;
            write_csv(
                &out.join("normalized_std.csv"),
                &["t", "omega", "normalized_std"],
                r.normalized_std()
                    .into_iter()
                    .map(|(t, s)| [t, r.omega, s].map(format_float)),
            )?;
            let mut text = summary_text(&r.summary, &r.ledger);
            let sigmas: Vec<_> = r.sigmas.iter().map(|&s| format_float(s)).collect();
            text.push_str(&format!(
                "final_dt = {}\nsigmas = {}\n",
                format_float(r.final_dt),
                sigmas.join(", ")
            ));
            write_file(&out.join("summary.txt"), &text)?;
        }
        ScenarioConfig::MonteCarlo(c) => {
            if cfg.vtk_every > 0 {
                log::warn!("vtk_every is ignored by the Monte Carlo driver");
            }
            let r = run_montecarlo(c)?;
            let ratios = r.ratios();
            write_csv(
                &out.join("mc_error.csv"),
                &["members", "groups", "mean_sq_error", "ratio_to_next"],
                r.table.iter().enumerate().map(|(k, row)| {
                    [
                        row.members.to_string(),
                        row.groups.to_string(),
                        format_float(row.mean_sq_error),
                        ratios.get(k).map(|&x| format_float(x)).unwrap_or_default(),
                    ]
                }),
            )?;
            write_vtk(&r.space, &r.reference, &r.space.zero_pressure(), &out.join("psi.vtk"))?;
        }
    }
    log::info!("{} finished in {:.1?}; outputs in {}", cfg.name(), start.elapsed(), out.display());
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn summary_text(s: &RunSummary, ledger: &StabilityLedger) -> String {
    format!(
        "accepted_steps = {}\nhalvings = {}\nfactorizations = {}\nsolves = {}\n\
         ledger_steps = {}\nledger_violations = {}\nledger_worst_ratio = {}\n",
        s.accepted,
        s.rejected,
        s.factorizations,
        s.solves,
        ledger.steps,
        ledger.violations.len(),
        format_float(ledger.worst_ratio)
    )
}

fn converge(c: &ConvergenceConfig, out: &Path) -> Result<()> {
    let table = run_convergence(c)?;
    let mut rows = Vec::new();
    for (k, level) in table.levels.iter().enumerate() {
        let rates = if k > 0 { table.rates(k - 1) } else { Vec::new() };
        for (m, e) in level.members.iter().enumerate() {
            let (l2_rate, h1_rate) = rates
                .get(m)
                .map(|&(a, b)| (format_float(a), format_float(b)))
                .unwrap_or_default();
            rows.push([
                level.g.to_string(),
                format_float(level.h),
                format_float(level.dt),
                m.to_string(),
                format_float(e.max_l2),
                format_float(e.grad_l2),
                l2_rate,
                h1_rate,
                level.accepted.to_string(),
                level.rejected.to_string(),
                level.ledger_violations.to_string(),
            ]);
            log::info!(
                "g = {:3}, member {m}: L2 {:.4e}  H1 {:.4e}  rates {} {}",
                level.g,
                e.max_l2,
                e.grad_l2,
                rows.last().map_or("", |r| r[6].as_str()),
                rows.last().map_or("", |r| r[7].as_str()),
            );
        }
    }
    write_csv(
        &out.join("convergence.csv"),
        &[
            "g",
            "h",
            "dt",
            "member",
            "l2_error",
            "h1_error",
            "l2_rate",
            "h1_rate",
            "accepted",
            "halvings",
            "ledger_violations",
        ],
        rows,
    )
}

/// Writes the ensemble mean velocity and pressure every `every` steps.
fn vtk_hook(out: &Path, every: usize) -> Result<Box<FieldHook<'static>>> {
    if every == 0 {
        return Ok(Box::new(|_, _| Ok(())));
    }
    let dir = out.join("vtk");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(Box::new(move |space: &FunctionSpace, r| {
        let step = r.state.step_index;
        if step % every != 0 {
            return Ok(());
        }
        let n = r.state.n_members() as f64;
        let mut p = vec![0.0; space.n_pressure()];
        for j in 0..r.state.n_members() {
            for (a, b) in p.iter_mut().zip(r.state.pressure(j).values()) {
                *a += b / n;
            }
        }
        let path = dir.join(format!("mean_{step:06}.vtk"));
        write_vtk(space, r.state.mean(), &CoefficientVector::pressure(p), &path)
    }))
}
