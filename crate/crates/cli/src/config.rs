//! The TOML run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Only the paths a command actually reads are checked for existence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unconv_core::corpus::CorpusFilter;
use unconv_core::gender::{GenderDict, DEFAULT_THRESHOLD};
use unconv_core::scoring::{Aggregation, TimingPolicy};
use unconv_core::stats::{GlmSpec, MarginSpec};

use crate::CliError;

pub const DEFAULT_REPLICATES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub input: InputPaths,
    #[serde(default)]
    pub filter: Option<CorpusFilter>,
    #[serde(default)]
    pub gender: GenderSettings,
    #[serde(default)]
    pub null_model: NullModelSettings,
    #[serde(default)]
    pub scoring: ScoringSettings,
    #[serde(default)]
    pub recipes: Vec<Recipe>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    /// Directory holding `corpus.jsonl`.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub snapshots: Option<PathBuf>,
    /// A `scores.csv` file.
    #[serde(default)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenderSettings {
    #[serde(default)]
    pub dictionary: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Teams with a larger share of unknown-gender members get no
    /// majority label.
    #[serde(default)]
    pub max_unknown_fraction: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl Default for GenderSettings {
    fn default() -> Self {
        GenderSettings {
            dictionary: None,
            threshold: DEFAULT_THRESHOLD,
            max_unknown_fraction: 0.0,
        }
    }
}

impl GenderSettings {
    pub fn load_dict(&self) -> Result<GenderDict, CliError> {
        match &self.dictionary {
            None => Ok(GenderDict::bundled()),
            Some(p) => {
                let f = fs::File::open(p).map_err(|e| CliError::io(p, e))?;
                GenderDict::load(f).map_err(|e| CliError::input(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullModelSettings {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Falls back to the top-level `master_seed`.
    #[serde(default)]
    pub master_seed: Option<u64>,
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

impl Default for NullModelSettings {
    fn default() -> Self {
        NullModelSettings {
            replicates: DEFAULT_REPLICATES,
            master_seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringSettings {
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub timing: TimingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    #[serde(flatten)]
    pub body: RecipeBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecipeBody {
    Glm {
        spec: GlmSpec,
        #[serde(default)]
        margins: Option<MarginSpec>,
    },
    BinnedScatter {
        x: String,
        y: String,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    QuantileGrid {
        x1: String,
        x2: String,
        y: String,
        #[serde(default = "default_quantiles")]
        q: usize,
    },
    /// Reversal rates by examiner-experience tercile and conventionality.
    Reversal,
    /// One survivorship index per focal CPC class.
    Survivorship {
        #[serde(default)]
        classes: Option<Vec<String>>,
    },
}

fn default_bins() -> usize {
    unconv_core::stats::tables::DEFAULT_SCATTER_BINS
}

fn default_quantiles() -> usize {
    unconv_core::stats::tables::DEFAULT_GRID_QUANTILES
}

impl RunConfig {
    /// Parses and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.input.corpus);
        fix(&mut self.input.snapshots);
        fix(&mut self.input.scores);
        fix(&mut self.gender.dictionary);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(f) = &self.filter {
            f.validate().map_err(|e| CliError::config(e.to_string()))?;
        }
        if !(0.0..=1.0).contains(&self.gender.threshold) {
            return Err(CliError::config(format!("gender.threshold {} outside [0, 1]", self.gender.threshold)));
        }
        if !(0.0..=1.0).contains(&self.gender.max_unknown_fraction) {
            return Err(CliError::config("gender.max_unknown_fraction outside [0, 1]".into()));
        }
        if self.null_model.replicates < 2 {
            return Err(CliError::config("null_model.replicates must be at least 2".into()));
        }
        if let Some(d) = &self.gender.dictionary {
            require_exists(d)?;
        }
        let mut names: Vec<&str> = self.recipes.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::config(format!("duplicate recipe name {:?}", w[0])));
        }
        if let Some(r) = self.recipes.iter().find(|r| !valid_name(&r.name)) {
            return Err(CliError::config(format!("recipe name {:?} must be [A-Za-z0-9_-]+", r.name)));
        }
        Ok(())
    }

    pub fn null_seed(&self) -> u64 {
        self.null_model.master_seed.unwrap_or(self.master_seed)
    }

    pub fn recipe(&self, name: &str) -> Result<&Recipe, CliError> {
        self.recipes
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| CliError::config(format!("no recipe named {name:?}")))
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

pub fn require_exists(p: &Path) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::config(format!("path {} does not exist", p.display())))
    }
}
