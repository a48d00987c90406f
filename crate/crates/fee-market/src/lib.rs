//! Command-line front end for `fee-market-core`: layered parameters, CSV and
//! JSON encoders, run manifests and parallel drivers for sweeps, simulation
//! ensembles and patient-user Monte Carlo.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod format;
pub mod manifest;
pub mod settings;

use std::path::Path;

pub use error::{CliError, CliResult};
pub use manifest::{Artifact, Run, RunManifest};
pub use settings::Settings;

use settings::{parse_config, preset, Table};

/// Builds the parameter layers. `SEED` in the environment backs `--seed`.
pub fn load_settings(flags: Table, config: Option<&Path>, preset_name: Option<&str>) -> CliResult<Settings> {
    let config = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => Table::new(),
    };
    let preset = preset_name.map(preset).transpose()?.unwrap_or_default();
    Settings::new(flags, config, preset, std::env::var("SEED").ok())
}

pub fn dispatch(command: &str, s: &Settings) -> CliResult<Run> {
    match command {
        "uc-bid" => commands::uc_bid(s),
        "eo-solve" => commands::eo_solve(s),
        "eo-bid" => commands::eo_bid_curves(s),
        "eo-curves" => commands::eo_curves(s),
        "sweep" => commands::sweep(s),
        "simulate" => commands::simulate(s),
        "patient" => commands::patient(s),
        other => Err(CliError::validation("command", format!("unknown command `{other}`"))),
    }
}
