//! TOML run configuration, presets and `section.key=value` overrides.
//!
//! ```toml
//! [params]        # every FluidParams field, unknown keys rejected
//! [initial]       # density profile, v mode amplitudes, b0, beta0
//! [forcing]       # kind = "zero" | "sinusoid" | "sampled"
//! [run]           # t_end, output_every, seedless
//! ```

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{FluidParams, FluidState, ForcingSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensityProfile {
    Uniform { value: f64 },
    /// `mean + amplitude cos(mode pi x / L)`
    Cosine { mean: f64, amplitude: f64, mode: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub density: DensityProfile,
    /// Leading sine coefficients of `v`; missing modes are zero.
    #[serde(default)]
    pub v_modes: Vec<f64>,
    #[serde(default)]
    pub b0: f64,
    #[serde(default)]
    pub beta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub t_end: f64,
    #[serde(default = "one")]
    pub output_every: usize,
    /// Runs are deterministic; the key exists so configs say so explicitly.
    #[serde(default = "yes")]
    pub seedless: bool,
    /// Trajectory path; not echoed into file headers.
    #[serde(default, skip_serializing)]
    pub output: Option<String>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: FluidParams,
    pub initial: InitialSpec,
    pub forcing: ForcingSignal,
    pub run: RunSpec,
}

pub const PRESETS: [&str; 3] = ["equilibrium", "free-decay", "forced"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let params = FluidParams::reference();
        let uniform = DensityProfile::Uniform { value: 1.0 };
        let (initial, forcing, t_end) = match name {
            "equilibrium" => (
                InitialSpec {
                    density: uniform,
                    v_modes: vec![],
                    b0: 0.0,
                    beta0: 0.0,
                },
                ForcingSignal::Zero,
                1.0,
            ),
            "free-decay" => (
                InitialSpec {
                    density: uniform,
                    v_modes: vec![],
                    b0: 0.1,
                    beta0: 0.0,
                },
                ForcingSignal::Zero,
                20.0,
            ),
            "forced" => (
                InitialSpec {
                    density: uniform,
                    v_modes: vec![],
                    b0: 0.0,
                    beta0: 0.0,
                },
                ForcingSignal::sinusoid(0.1, 1.0),
                20.0,
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(Self {
            params,
            initial,
            forcing,
            run: RunSpec {
                t_end,
                output_every: 1,
                seedless: true,
                output: None,
            },
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: Table) -> Result<Self> {
        let config: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses `text`, applies `section.key=value` overrides, then validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        Self::from_table(table)
    }

    pub fn to_table(&self) -> Result<Table> {
        Table::try_from(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical TOML; feeding it back reproduces the same config exactly.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.forcing.validate()?;
        if !self.run.seedless {
            return Err(Error::Config("seedless must be true: runs have no random components".into()));
        }
        if !(self.run.t_end > 0.0) || !self.run.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be > 0 (got {})", self.run.t_end)));
        }
        if self.run.output_every < 1 {
            return Err(Error::Config("output_every must be >= 1".into()));
        }
        if self.initial.v_modes.len() > self.params.n_modes {
            return Err(Error::Config(format!(
                "{} v_modes given but n_modes = {}",
                self.initial.v_modes.len(),
                self.params.n_modes
            )));
        }
        match self.initial.density {
            DensityProfile::Uniform { value } if !(value > 0.0) => {
                return Err(Error::Config(format!("initial density must be > 0 (got {value})")))
            }
            DensityProfile::Cosine { mean, amplitude, .. } if !(mean - amplitude.abs() > 0.0) => {
                return Err(Error::Config(format!(
                    "cosine density must stay positive (mean {mean}, amplitude {amplitude})"
                )))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<FluidState> {
        let p = &self.params;
        let rho = match self.initial.density {
            DensityProfile::Uniform { value } => vec![value; p.n_cells],
            DensityProfile::Cosine { mean, amplitude, mode } => FluidState::cosine_profile(p, mean, amplitude, mode),
        };
        let mut v = vec![0.0; p.n_modes];
        v[..self.initial.v_modes.len()].copy_from_slice(&self.initial.v_modes);
        FluidState::new(0.0, rho, v, self.initial.b0, self.initial.beta0)
    }
}

/// Applies `section.key=value` assignments; values are parsed as TOML, falling
/// back to a bare string.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{item}' is not of the form section.key=value")))?;
        let value = parse_value(raw.trim());
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(Error::Config(format!("override '{item}' has an empty key")));
        }
        set_path(table, &keys, value)?;
    }
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut Table, keys: &[&str], value: Value) -> Result<()> {
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{k}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Recursive merge of `over` into `base`; tables merge, everything else replaces.
pub fn merge_tables(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Axes a sweep may vary, in the order they appear in the metrics table.
pub const SWEEP_AXES: [&str; 7] = ["a", "gamma", "mu", "epsilon", "delta", "omega", "k"];

/// `preset` and `[base]` build the base config; `[axes]` lists values per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: RunConfig,
    /// `(axis, values)` in canonical axis order.
    pub axes: Vec<(String, Vec<f64>)>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut doc: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut base = match doc.remove("preset") {
            Some(Value::String(name)) => RunConfig::preset(&name)?.to_table()?,
            Some(other) => return Err(Error::Config(format!("preset must be a string (got {other})"))),
            None => Table::new(),
        };
        if let Some(value) = doc.remove("base") {
            match value {
                Value::Table(t) => merge_tables(&mut base, t),
                _ => return Err(Error::Config("[base] must be a table".into())),
            }
        }
        let axes_table = match doc.remove("axes") {
            Some(Value::Table(t)) => t,
            Some(_) => return Err(Error::Config("[axes] must be a table".into())),
            None => Table::new(),
        };
        if let Some(key) = doc.keys().next() {
            return Err(Error::Config(format!("unknown sweep key '{key}'")));
        }
        let mut axes = Vec::new();
        for (name, value) in &axes_table {
            if !SWEEP_AXES.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown sweep axis '{name}' (expected one of {})",
                    SWEEP_AXES.join(", ")
                )));
            }
            let values = value
                .as_array()
                .ok_or_else(|| Error::Config(format!("axis '{name}' must be an array")))?
                .iter()
                .map(|v| {
                    v.as_float()
                        .or_else(|| v.as_integer().map(|i| i as f64))
                        .ok_or_else(|| Error::Config(format!("axis '{name}' holds a non-number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                return Err(Error::Config(format!("axis '{name}' is empty")));
            }
            axes.push((name.clone(), values));
        }
        axes.sort_by_key(|(name, _)| SWEEP_AXES.iter().position(|a| a == name));
        let config = Self {
            base: RunConfig::from_table(base)?,
            axes,
        };
        for i in 0..config.len() {
            config.config_at(i)?.validate()?;
        }
        Ok(config)
    }

    /// Number of combinations.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis values of combination `index`; the last axis varies fastest.
    pub fn point(&self, index: usize) -> Vec<(String, f64)> {
        let mut rem = index;
        let mut out = vec![(String::new(), 0.0); self.axes.len()];
        for (slot, (name, values)) in out.iter_mut().zip(&self.axes).rev() {
            *slot = (name.clone(), values[rem % values.len()]);
            rem /= values.len();
        }
        out
    }

    pub fn config_at(&self, index: usize) -> Result<RunConfig> {
        let mut c = self.base.clone();
        for (name, value) in self.point(index) {
            match name.as_str() {
                "a" => c.params.a = value,
                "gamma" => c.params.gamma = value,
                "mu" => c.params.mu = value,
                "epsilon" => c.params.epsilon = value,
                "delta" => c.params.delta = value,
                "k" => c.params.k_spring = value,
                "omega" => match &mut c.forcing {
                    ForcingSignal::Sinusoid { omega, .. } => *omega = value,
                    _ => return Err(Error::Config("the omega axis needs sinusoid forcing".into())),
                },
                other => return Err(Error::Config(format!("unknown sweep axis '{other}'"))),
            }
        }
        Ok(c)
    }
}
