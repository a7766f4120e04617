//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, no sections. `scenario` is
//! required. `full = true` swaps in the full-scale defaults before any other
//! key is applied, so explicit keys always win regardless of their order.
//! `epsilon = dt` ties the penalty to the resolved timestep.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiments::cylinder::CylinderConfig;
use crate::experiments::manufactured::ConvergenceConfig;
use crate::experiments::montecarlo::MonteCarloConfig;
use crate::experiments::rotors::RotorsConfig;
use crate::experiments::ScenarioName;
use crate::io::table::format_float;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioConfig {
    Converge(ConvergenceConfig),
    Rotors(RotorsConfig),
    Cylinder(CylinderConfig),
    MonteCarlo(MonteCarloConfig),
}

impl ScenarioConfig {
    pub fn defaults(name: ScenarioName, full: bool) -> Self {
        match name {
            ScenarioName::Converge => Self::Converge(ConvergenceConfig::default()),
            ScenarioName::Rotors if full => Self::Rotors(RotorsConfig::full()),
            ScenarioName::Rotors => Self::Rotors(RotorsConfig::default()),
            ScenarioName::Cylinder if full => Self::Cylinder(CylinderConfig::full()),
            ScenarioName::Cylinder => Self::Cylinder(CylinderConfig::default()),
            ScenarioName::MonteCarlo => Self::MonteCarlo(MonteCarloConfig::default()),
        }
    }

    pub fn name(&self) -> ScenarioName {
        match self {
            Self::Converge(_) => ScenarioName::Converge,
            Self::Rotors(_) => ScenarioName::Rotors,
            Self::Cylinder(_) => ScenarioName::Cylinder,
            Self::MonteCarlo(_) => ScenarioName::MonteCarlo,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Converge(c) => c.validate(),
            Self::Rotors(c) => c.params().map(drop),
            Self::Cylinder(c) => c.params().map(drop),
            Self::MonteCarlo(c) => c.params().map(drop),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub full_scale: bool,
    pub out_dir: PathBuf,
    /// Write a VTK file every this many accepted steps; 0 disables.
    pub vtk_every: usize,
}

impl RunConfig {
    pub fn defaults(name: ScenarioName, full: bool) -> Self {
        Self {
            scenario: ScenarioConfig::defaults(name, full),
            full_scale: full,
            out_dir: PathBuf::from("out"),
            vtk_every: 0,
        }
    }

    pub fn name(&self) -> ScenarioName {
        self.scenario.name()
    }

    /// Every key with its resolved value. Parsing this text gives back an
    /// equal config.
    pub fn to_config_text(&self) -> String {
        let mut lines: Vec<(&str, String)> = vec![
            ("scenario", self.name().to_string()),
            ("full", self.full_scale.to_string()),
            ("out", self.out_dir.display().to_string()),
            ("vtk_every", self.vtk_every.to_string()),
        ];
        let eps = |e: Option<f64>| e.map_or_else(|| "dt".to_string(), format_float);
        match &self.scenario {
            ScenarioConfig::Converge(c) => lines.extend([
                ("base_g", c.base_g.to_string()),
                ("ratio", format_float(c.ratio)),
                ("levels", c.levels.to_string()),
                ("dt_rule", c.dt_rule.to_string()),
                ("dt_factor", format_float(c.dt_factor)),
                ("epsilon", eps(c.epsilon)),
                ("nu", format_float(c.nu)),
                ("t_final", format_float(c.t_final)),
                ("deltas", float_list(&c.deltas)),
                ("cfl_constant", format_float(c.cfl_constant)),
                ("allow_dt_growth", c.allow_dt_growth.to_string()),
            ]),
            ScenarioConfig::Rotors(c) => lines.extend([
                ("mesh", c.mesh.to_string()),
                ("nu", format_float(c.nu)),
                ("dt", format_float(c.dt)),
                ("epsilon", eps(c.epsilon)),
                ("t_final", format_float(c.t_final)),
                ("sigmas", float_list(&c.sigmas)),
                ("amplitude", format_float(c.amplitude)),
                ("period", format_float(c.schedule.period)),
                ("ramp", format_float(c.schedule.ramp)),
                ("cfl_constant", format_float(c.cfl_constant)),
                ("allow_dt_growth", c.allow_dt_growth.to_string()),
                ("stats_every", c.stats_every.to_string()),
            ]),
            ScenarioConfig::Cylinder(c) => lines.extend([
                ("mesh", c.mesh.to_string()),
                ("members", c.members.to_string()),
                ("nu", format_float(c.nu)),
                ("dt", format_float(c.dt)),
                ("epsilon", eps(c.epsilon)),
                ("t_final", format_float(c.t_final)),
                ("omega", format_float(c.omega)),
                ("seed", c.seed.to_string()),
                ("sigma_max", format_float(c.sigma_max)),
                ("sigmas", c.sigmas.as_deref().map_or_else(|| "auto".to_string(), float_list)),
                ("cfl_constant", format_float(c.cfl_constant)),
                ("allow_dt_growth", c.allow_dt_growth.to_string()),
                ("stats_every", c.stats_every.to_string()),
            ]),
            ScenarioConfig::MonteCarlo(c) => lines.extend([
                ("g", c.g.to_string()),
                ("nu", format_float(c.nu)),
                ("dt", format_float(c.dt)),
                ("epsilon", eps(c.epsilon)),
                ("t_final", format_float(c.t_final)),
                ("groups", c.groups.to_string()),
                ("sizes", list(c.sizes.iter())),
                ("seed", c.seed.to_string()),
                ("law", c.law.to_string()),
                ("noise", format_float(c.noise)),
                ("mean_force", format_float(c.mean_force)),
                ("kmax", c.kmax.to_string()),
                ("reference", c.reference.to_string()),
                ("cfl_constant", format_float(c.cfl_constant)),
                ("allow_dt_growth", c.allow_dt_growth.to_string()),
            ]),
        }
        let mut s = String::new();
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn list<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn float_list(v: &[f64]) -> String {
    list(v.iter().map(|&x| format_float(x)))
}

/// Keys accepted by at least one scenario, for error messages.
const KNOWN_KEYS: &[&str] = &[
    "scenario", "full", "out", "vtk_every", "nu", "dt", "epsilon", "t_final", "cfl_constant",
    "allow_dt_growth", "stats_every", "mesh", "seed", "sigmas", "base_g", "ratio", "levels",
    "dt_rule", "dt_factor", "deltas", "amplitude", "period", "ramp", "members", "omega",
    "sigma_max", "g", "groups", "sizes", "law", "noise", "mean_force", "kmax", "reference",
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

impl Entry {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            key: self.key.clone(),
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, what: &str) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("expected {what}, got '{}'", self.value)))
    }

    fn float(&self) -> Result<f64> {
        let x: f64 = self.parse("a number")?;
        if !x.is_finite() {
            return Err(self.err(format!("expected a finite number, got '{}'", self.value)));
        }
        Ok(x)
    }

    fn positive(&self) -> Result<f64> {
        let x = self.float()?;
        if x <= 0.0 {
            return Err(self.err(format!("must be positive, got {x}")));
        }
        Ok(x)
    }

    fn nonnegative(&self) -> Result<f64> {
        let x = self.float()?;
        if x < 0.0 {
            return Err(self.err(format!("must be nonnegative, got {x}")));
        }
        Ok(x)
    }

    fn count(&self) -> Result<usize> {
        self.parse("a nonnegative integer")
    }

    fn flag(&self) -> Result<bool> {
        match self.value.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(self.err(format!("expected true or false, got '{other}'"))),
        }
    }

    fn items(&self) -> impl Iterator<Item = &str> {
        self.value.split(',').map(str::trim).filter(|s| !s.is_empty())
    }

    fn floats(&self) -> Result<Vec<f64>> {
        self.items()
            .map(|s| match s.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(self.err(format!("bad number '{s}' in list"))),
            })
            .collect()
    }

    fn counts(&self) -> Result<Vec<usize>> {
        self.items()
            .map(|s| s.parse().map_err(|_| self.err(format!("bad integer '{s}' in list"))))
            .collect()
    }

    fn epsilon(&self) -> Result<Option<f64>> {
        if self.value == "dt" {
            Ok(None)
        } else {
            self.positive().map(Some)
        }
    }

    /// Parses with the type's own `FromStr`, keeping its message.
    fn typed<T: FromStr<Err = Error>>(&self) -> Result<T> {
        self.value.parse().map_err(|e: Error| self.err(e.to_string()))
    }
}

fn split_lines(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                key: content.to_string(),
                message: "expected `key = value`".into(),
            });
        };
        let entry = Entry {
            line,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        };
        if entry.key.is_empty() {
            return Err(entry.err("empty key"));
        }
        if entry.value.is_empty() {
            return Err(entry.err("missing value"));
        }
        if let Some(first) = seen.insert(entry.key.clone(), line) {
            return Err(entry.err(format!("given twice (first at line {first})")));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_overrides(text, &[])
}

/// Parses `text`, then applies `overrides` (from the command line) on top.
/// An override of `scenario` must agree with the file if both name one.
pub fn parse_config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut entries = split_lines(text)?;
    for (k, v) in overrides {
        let e = Entry {
            line: 0,
            key: k.clone(),
            value: v.trim().to_string(),
        };
        if k == "scenario" {
            if let Some(prev) = entries.iter().find(|p| p.key == "scenario") {
                if prev.value != e.value {
                    return Err(prev.err(format!("file says '{}' but '{}' was requested", prev.value, e.value)));
                }
                continue;
            }
        }
        entries.push(e);
    }

    let last = |key: &str| entries.iter().rev().find(|e| e.key == key);
    let Some(scenario_entry) = last("scenario") else {
        return Err(Error::Config {
            line: 0,
            key: "scenario".into(),
            message: format!(
                "missing required key (one of {})",
                list(ScenarioName::ALL.iter())
            ),
        });
    };
    let name: ScenarioName = scenario_entry.typed()?;
    let full = last("full").map(Entry::flag).transpose()?.unwrap_or(false);
    let mut cfg = RunConfig::defaults(name, full);

    let mut members_given = false;
    for e in &entries {
        match e.key.as_str() {
            "scenario" | "full" => {}
            "out" => cfg.out_dir = PathBuf::from(&e.value),
            "vtk_every" => cfg.vtk_every = e.count()?,
            key => {
                members_given |= key == "members";
                if !apply(&mut cfg.scenario, e)? {
                    return Err(e.err(if KNOWN_KEYS.contains(&key) {
                        format!("not used by scenario {name}")
                    } else {
                        "unknown key".to_string()
                    }));
                }
            }
        }
    }
    if let ScenarioConfig::Cylinder(c) = &mut cfg.scenario {
        if let (Some(s), false) = (&c.sigmas, members_given) {
            c.members = s.len();
        }
    }
    cfg.scenario.validate().map_err(|e| scenario_entry.err(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

/// Applies one key to the scenario; `false` if the scenario has no such key.
fn apply(s: &mut ScenarioConfig, e: &Entry) -> Result<bool> {
    match s {
        ScenarioConfig::Converge(c) => {
            match e.key.as_str() {
                "base_g" => c.base_g = e.count()?,
                "ratio" => c.ratio = e.positive()?,
                "levels" => c.levels = e.count()?,
                "dt_rule" => c.dt_rule = e.typed()?,
                "dt_factor" => c.dt_factor = e.positive()?,
                "epsilon" => c.epsilon = e.epsilon()?,
                "nu" => c.nu = e.positive()?,
                "t_final" => c.t_final = e.positive()?,
                "deltas" => c.deltas = e.floats()?,
                "cfl_constant" => c.cfl_constant = e.nonnegative()?,
                "allow_dt_growth" => c.allow_dt_growth = e.flag()?,
                _ => return Ok(false),
            }
        }
        ScenarioConfig::Rotors(c) => {
            match e.key.as_str() {
                "mesh" => c.mesh = e.typed()?,
                "nu" => c.nu = e.positive()?,
                "dt" => c.dt = e.positive()?,
                "epsilon" => c.epsilon = e.epsilon()?,
                "t_final" => c.t_final = e.positive()?,
                "sigmas" => c.sigmas = e.floats()?,
                "amplitude" => c.amplitude = e.float()?,
                "period" => c.schedule.period = e.positive()?,
                "ramp" => c.schedule.ramp = e.nonnegative()?,
                "cfl_constant" => c.cfl_constant = e.nonnegative()?,
                "allow_dt_growth" => c.allow_dt_growth = e.flag()?,
                "stats_every" => c.stats_every = e.count()?,
                _ => return Ok(false),
            }
        }
        ScenarioConfig::Cylinder(c) => {
            match e.key.as_str() {
                "mesh" => c.mesh = e.typed()?,
                "members" => c.members = e.count()?,
                "nu" => c.nu = e.positive()?,
                "dt" => c.dt = e.positive()?,
                "epsilon" => c.epsilon = e.epsilon()?,
                "t_final" => c.t_final = e.positive()?,
                "omega" => c.omega = e.float()?,
                "seed" => c.seed = e.parse("a seed (unsigned integer)")?,
                "sigma_max" => c.sigma_max = e.nonnegative()?,
                "sigmas" if e.value == "auto" => c.sigmas = None,
                "sigmas" => c.sigmas = Some(e.floats()?),
                "cfl_constant" => c.cfl_constant = e.nonnegative()?,
                "allow_dt_growth" => c.allow_dt_growth = e.flag()?,
                "stats_every" => c.stats_every = e.count()?,
                _ => return Ok(false),
            }
        }
        ScenarioConfig::MonteCarlo(c) => {
            match e.key.as_str() {
                "g" => c.g = e.count()?,
                "nu" => c.nu = e.positive()?,
                "dt" => c.dt = e.positive()?,
                "epsilon" => c.epsilon = e.epsilon()?,
                "t_final" => c.t_final = e.positive()?,
                "groups" => c.groups = e.count()?,
                "sizes" => c.sizes = e.counts()?,
                "seed" => c.seed = e.parse("a seed (unsigned integer)")?,
                "law" => c.law = e.typed()?,
                "noise" => c.noise = e.nonnegative()?,
                "mean_force" => c.mean_force = e.float()?,
                "kmax" => c.kmax = e.count()?,
                "reference" => c.reference = e.typed()?,
                "cfl_constant" => c.cfl_constant = e.nonnegative()?,
                "allow_dt_growth" => c.allow_dt_growth = e.flag()?,
                _ => return Ok(false),
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::manufactured::TimestepRule;
    use crate::experiments::montecarlo::McReference;
    use crate::experiments::MeshSource;

    fn config_error(text: &str) -> (usize, String, String) {
        match parse_config(text) {
            Err(Error::Config { line, key, message }) => (line, key, message),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn converge_with_defaults() {
        let cfg = parse_config("scenario = converge\nlevels = 3").unwrap();
        let ScenarioConfig::Converge(c) = &cfg.scenario else { panic!() };
        assert_eq!(c, &ConvergenceConfig::default());
        assert_eq!(cfg.vtk_every, 0);
        assert!(!cfg.full_scale);
    }

    #[test]
    fn epsilon_follows_dt() {
        let cfg = parse_config("scenario = rotors\ndt = 0.004\nepsilon = dt").unwrap();
        let ScenarioConfig::Rotors(c) = &cfg.scenario else { panic!() };
        assert_eq!(c.epsilon, None);
        assert_eq!(c.params().unwrap().epsilon, 0.004);
        let cfg = parse_config("scenario = rotors\nepsilon = 0.5").unwrap();
        let ScenarioConfig::Rotors(c) = &cfg.scenario else { panic!() };
        assert_eq!(c.params().unwrap().epsilon, 0.5);
    }

    #[test]
    fn negative_viscosity_names_key_and_line() {
        let (line, key, msg) = config_error("# comment\nscenario = cylinder\nnu = -1\n");
        assert_eq!((line, key.as_str()), (3, "nu"));
        assert!(msg.contains("positive"), "{msg}");
    }

    #[test]
    fn bad_keys_and_values() {
        assert_eq!(config_error("scenario = converge\nfoo = 1").1, "foo");
        let (_, key, msg) = config_error("scenario = converge\nomega = 1");
        assert_eq!(key, "omega");
        assert!(msg.contains("not used"), "{msg}");
        assert_eq!(config_error("scenario = rotors\ndt = fast").0, 2);
        assert_eq!(config_error("levels = 3").1, "scenario");
        assert_eq!(config_error("scenario = stokes").1, "scenario");
        assert_eq!(config_error("scenario = rotors\nnu = 1\nnu = 2").0, 3);
        assert_eq!(config_error("scenario = rotors\njust text").0, 2);
        assert_eq!(config_error("scenario = converge\nlevels = 1").1, "scenario");
        assert_eq!(config_error("scenario = montecarlo\nreference = sample:x").1, "reference");
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "\n  # header\nscenario = montecarlo   # inline\n\nsizes = 2, 4\nreference = deterministic\n";
        let cfg = parse_config(text).unwrap();
        let ScenarioConfig::MonteCarlo(c) = &cfg.scenario else { panic!() };
        assert_eq!(c.sizes, vec![2, 4]);
        assert_eq!(c.reference, McReference::Deterministic);
    }

    #[test]
    fn full_applies_before_other_keys() {
        let cfg = parse_config("t_final = 3\nscenario = cylinder\nfull = true").unwrap();
        let ScenarioConfig::Cylinder(c) = &cfg.scenario else { panic!() };
        assert_eq!(c.mesh, MeshSource::Builtin("cylinder".into()));
        assert_eq!(c.t_final, 3.0);
        assert!(cfg.full_scale);
    }

    #[test]
    fn overrides_win_and_scenario_must_agree() {
        let ov = |pairs: &[(&str, &str)]| -> Vec<(String, String)> {
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
        };
        let cfg = parse_config_with_overrides(
            "scenario = cylinder\nomega = 10",
            &ov(&[("scenario", "cylinder"), ("omega", "1000"), ("members", "4")]),
        )
        .unwrap();
        let ScenarioConfig::Cylinder(c) = &cfg.scenario else { panic!() };
        assert_eq!((c.omega, c.members), (1000.0, 4));
        assert!(parse_config_with_overrides("scenario = rotors", &ov(&[("scenario", "cylinder")])).is_err());
        let err = parse_config_with_overrides("", &ov(&[("scenario", "rotors"), ("levels", "2")])).unwrap_err();
        assert!(err.to_string().contains("command line"), "{err}");
    }

    #[test]
    fn explicit_sigmas_set_member_count() {
        let cfg = parse_config("scenario = cylinder\nsigmas = 0.1, -0.1, 0").unwrap();
        let ScenarioConfig::Cylinder(c) = &cfg.scenario else { panic!() };
        assert_eq!(c.members, 3);
        assert!(parse_config("scenario = cylinder\nsigmas = 0.1\nmembers = 2").is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        for name in ScenarioName::ALL {
            for full in [false, true] {
                let mut cfg = RunConfig::defaults(name, full);
                cfg.vtk_every = 7;
                match &mut cfg.scenario {
                    ScenarioConfig::Converge(c) => {
                        c.dt_rule = TimestepRule::Quadratic;
                        c.epsilon = Some(1.0 / 3.0);
                    }
                    ScenarioConfig::Cylinder(c) => c.sigmas = Some(c.resolved_sigmas()),
                    _ => {}
                }
                let text = cfg.to_config_text();
                assert_eq!(parse_config(&text).unwrap(), cfg, "{text}");
            }
        }
    }
}
