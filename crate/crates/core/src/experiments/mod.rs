//! Reproducible scenario drivers: the manufactured convergence study, the
//! two-rotor flow, flow past a cylinder with rotation, and Monte Carlo
//! sampling of a randomly forced problem.

pub mod cylinder;
pub mod manufactured;
pub mod montecarlo;
pub mod rotors;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::FunctionSpace;
use crate::mesh::{generate_unit_square, read_msh, Mesh};
use crate::stepper::StepReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioName {
    Converge,
    Rotors,
    Cylinder,
    MonteCarlo,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [Self::Converge, Self::Rotors, Self::Cylinder, Self::MonteCarlo];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converge => "converge",
            Self::Rotors => "rotors",
            Self::Cylinder => "cylinder",
            Self::MonteCarlo => "montecarlo",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario '{s}'")))
    }
}

/// Called after every accepted step with the scenario's space.
pub type FieldHook<'a> = dyn FnMut(&FunctionSpace, &StepReport) -> Result<()> + 'a;

const BUILTIN_MESHES: [(&str, &str); 4] = [
    ("rotors", include_str!("../../meshes/rotors.msh")),
    ("rotors_coarse", include_str!("../../meshes/rotors_coarse.msh")),
    ("cylinder", include_str!("../../meshes/cylinder.msh")),
    ("cylinder_coarse", include_str!("../../meshes/cylinder_coarse.msh")),
];

/// Names accepted by [`MeshSource::Builtin`].
pub fn builtin_mesh_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_MESHES.iter().map(|(n, _)| *n)
}

/// Where a scenario gets its mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    /// One of the meshes shipped with the crate.
    Builtin(String),
    /// A Gmsh 2.2 ASCII file.
    File(PathBuf),
    /// `g x g` structured unit square.
    UnitSquare(usize),
}

impl MeshSource {
    pub fn load(&self) -> Result<Mesh> {
        let import = match self {
            Self::UnitSquare(g) => return generate_unit_square(*g),
            Self::Builtin(name) => {
                let text = BUILTIN_MESHES
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, t)| *t)
                    .ok_or_else(|| {
                        let known: Vec<_> = builtin_mesh_names().collect();
                        Error::InvalidArgument(format!(
                            "no builtin mesh '{name}' (known: {})",
                            known.join(", ")
                        ))
                    })?;
                read_msh(text)?
            }
            Self::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                read_msh(&text)?
            }
        };
        if import.skipped_elements > 0 {
            log::warn!("{self}: skipped {} unsupported elements", import.skipped_elements);
        }
        Ok(import.mesh)
    }
}

impl fmt::Display for MeshSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Builtin(n) => write!(f, "builtin:{n}"),
            Self::File(p) => write!(f, "{}", p.display()),
            Self::UnitSquare(g) => write!(f, "square:{g}"),
        }
    }
}

impl FromStr for MeshSource {
    type Err = Error;

    /// `builtin:NAME`, `square:G`, or a file path.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("builtin:") {
            Ok(Self::Builtin(name.to_string()))
        } else if let Some(g) = s.strip_prefix("square:") {
            g.trim()
                .parse()
                .map(Self::UnitSquare)
                .map_err(|_| Error::InvalidArgument(format!("bad grid size in '{s}'")))
        } else if s.is_empty() {
            Err(Error::InvalidArgument("empty mesh path".into()))
        } else {
            Ok(Self::File(PathBuf::from(s)))
        }
    }
}
