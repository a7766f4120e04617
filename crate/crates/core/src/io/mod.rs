//! Run configuration, CSV statistics and legacy VTK output.

pub mod config;
pub mod table;
pub mod vtk;

pub use config::{parse_config, parse_config_with_overrides, RunConfig, ScenarioConfig};
pub use table::{format_float, read_stats_csv, write_csv, write_stats_csv, STATS_HEADER};
pub use vtk::{vtk_string, write_vtk};
