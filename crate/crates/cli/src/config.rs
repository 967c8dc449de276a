use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use lob_field::baselines::{baseline_spec, BaselineKind};
use lob_field::dynamics::RunSpec;
use lob_field::{presets, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Cf,
    Cs,
    Kstt,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Cf => "cf",
            Model::Cs => "cs",
            Model::Kstt => "kstt",
        }
    }

    /// The run spec of this model built from a continuous-field spec.
    pub fn spec(self, base: &RunSpec) -> Result<RunSpec> {
        match self {
            Model::Cf => Ok(base.clone()),
            Model::Cs => baseline_spec(BaselineKind::Cs, base),
            Model::Kstt => baseline_spec(BaselineKind::Kstt, base),
        }
    }
}

/// Built-in base specs used when the config has no `[run]` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Boundary volume near `k0` with `k1 = k_inf`: the quartic-tail setting.
    #[default]
    Reference,
    /// Velocity spread of order `v0`, for model contrasts.
    Contrast,
}

impl Preset {
    pub fn spec(self) -> RunSpec {
        match self {
            Preset::Reference => presets::reference_cf(),
            Preset::Contrast => presets::contrast_cf(),
        }
    }
}

fn default_seed() -> u64 {
    presets::REFERENCE_SEED
}

fn default_steps() -> usize {
    20_000
}

fn yes() -> bool {
    true
}

/// Everything a run needs. Read from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "model_cf")]
    pub model: Model,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Ticks run before anything is recorded.
    #[serde(default)]
    pub burn_in: usize,
    /// Write the per-tick record stream.
    #[serde(default = "yes")]
    pub records: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Continuous-field spec; the preset when absent. Baselines are derived from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSpec>,
}

fn model_cf() -> Model {
    Model::Cf
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Model::Cf,
            preset: Preset::Reference,
            seed: default_seed(),
            steps: default_steps(),
            burn_in: 0,
            records: true,
            output: None,
            run: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn base_spec(&self) -> RunSpec {
        self.run.clone().unwrap_or_else(|| self.preset.spec())
    }

    /// Checks everything that can be checked before a run starts.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        let spec = self.model.spec(&self.base_spec())?;
        spec.simulation(self.seed)?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Writes the resolved config, with the base spec spelled out, into `dir`. The output path
    /// is left out so that identical runs give identical files wherever they are written.
    pub fn record_into(&self, dir: &Path) -> Result<()> {
        let mut resolved = self.clone();
        resolved.run = Some(self.base_spec());
        resolved.output = None;
        fs::write(dir.join("config.toml"), resolved.to_toml()?)?;
        Ok(())
    }
}

/// Flags shared by every command that runs a simulation.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// Base spec used when the config has no [run] table.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Tick length.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of lattice cells.
    #[arg(long)]
    pub cells: Option<usize>,
    /// Lattice spacing in log price.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Output directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(p) = self.preset {
            cfg.preset = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        if self.dt.is_some() || self.cells.is_some() || self.dx.is_some() {
            let mut spec = cfg.base_spec();
            if let Some(dt) = self.dt {
                spec.step.dt = dt;
            }
            if let Some(c) = self.cells {
                spec.grid.cells = c;
            }
            if let Some(dx) = self.dx {
                spec.grid.dx = dx;
            }
            cfg.run = Some(spec);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Output directory of a run, created if missing.
pub fn output_dir(cfg: &RunConfig, fallback: &str) -> Result<PathBuf> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from(fallback));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Lattice cells kept in analysis frames: all of a small lattice, else 32 evenly spaced from 0.
pub fn default_frame_cells(cells: usize) -> Vec<usize> {
    const KEEP: usize = 32;
    if cells <= KEEP {
        (0..cells).collect()
    } else {
        (0..KEEP).map(|k| k * cells / KEEP).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.run = Some(cfg.base_spec());
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_steps_rejected() {
        let cfg = RunConfig { steps: 0, ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn frame_cells() {
        assert_eq!(default_frame_cells(4), vec![0, 1, 2, 3]);
        let c = default_frame_cells(512);
        assert_eq!((c.len(), c[0], c[1], c[31]), (32, 0, 16, 496));
    }
}
