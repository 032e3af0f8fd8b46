//! Scenario files: the flat parameter keys at top level, plus optional
//! `[channel]`, `[sweep]` and `[run]` tables.

use std::path::Path;

use cvqkd_core::params::{ChannelParams, ParamsConfig, ParamsFile};
use cvqkd_core::sweep::Grid;
use serde::Deserialize;

use crate::exit::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub t_trans: Option<f64>,
    pub distance_km: Option<f64>,
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub grid: Option<String>,
    pub eps: Option<Vec<f64>>,
    pub k: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioConfig {
    pub params: ParamsConfig,
    pub channel: ChannelSection,
    pub sweep: SweepSection,
    pub run: RunSection,
}

fn section<T: for<'de> Deserialize<'de> + Default>(
    table: &mut toml::Table,
    name: &str,
) -> Result<T, String> {
    match table.remove(name) {
        None => Ok(T::default()),
        Some(v) => v
            .try_into()
            .map_err(|e: toml::de::Error| format!("[{name}]: {e}")),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let channel = section(&mut table, "channel")?;
        let sweep = section(&mut table, "sweep")?;
        let run = section(&mut table, "run")?;
        let file: ParamsFile = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| e.to_string())?;
        let params = file.resolve().map_err(|e| e.to_string())?;
        let cfg = Self {
            params,
            channel,
            sweep,
            run,
        };
        if let Some(g) = &cfg.sweep.grid {
            g.parse::<Grid>()
                .map_err(|e| format!("[sweep] grid: {e}"))?;
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    /// The channel from the config, with command-line values taking priority.
    /// Exactly one of transmissivity or distance must be given.
    pub fn channel(
        &self,
        t_trans: Option<f64>,
        distance_km: Option<f64>,
        eps: Option<f64>,
    ) -> Result<ChannelParams, CliError> {
        let (t, d) = if t_trans.is_some() || distance_km.is_some() {
            (t_trans, distance_km)
        } else {
            (self.channel.t_trans, self.channel.distance_km)
        };
        let eps = eps.or(self.channel.eps).ok_or_else(|| {
            CliError::input("channel excess noise not given (--eps or [channel] eps)")
        })?;
        let ch = match (t, d) {
            (Some(t), None) => ChannelParams::new(t, eps),
            (None, Some(d)) => {
                ChannelParams::from_distance(d, self.params.fiber_loss_db_per_km, eps)
            }
            (Some(_), Some(_)) => {
                return Err(CliError::input(
                    "give either transmissivity or distance, not both",
                ))
            }
            (None, None) => {
                return Err(CliError::input(
                    "channel not given (--t-trans or --distance-km)",
                ))
            }
        };
        ch.map_err(CliError::from)
    }

    /// Grid from the command line, else the config, else `default`.
    pub fn grid(&self, cli: Option<&Grid>, default: &str) -> Result<Vec<f64>, CliError> {
        let g = match (cli, &self.sweep.grid) {
            (Some(g), _) => *g,
            (None, Some(s)) => s.parse().map_err(CliError::from)?,
            (None, None) => default.parse().map_err(CliError::from)?,
        };
        Ok(g.values())
    }

    pub fn seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.run.seed).unwrap_or(0)
    }
}
