//! Run configuration: one TOML file with a section per stage, plus
//! `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tickmix::benchmarks::birth_death::DEFAULT_PATHS;
use tickmix::benchmarks::GlmOptions;
use tickmix::features::{DatasetConfig, PriceReference, SplitRanges};
use tickmix::net::{NetConfig, TrainConfig};
use tickmix::orderflow::GeneratorConfig;
use tickmix::sim::SimConfig;

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    /// Seconds of order flow per pair.
    pub duration: f64,
    /// 1 or 2; the second pair is generated from a derived seed.
    pub pairs: usize,
    pub output: PathBuf,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection { duration: 3600.0, pairs: 1, output: PathBuf::from("stream.ndjson") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    /// One stream per pair. With two inputs the second is relabeled PairB.
    pub inputs: Vec<PathBuf>,
    /// Fractions of the anchor-time span given to train and validation; the
    /// rest is test.
    pub train_frac: f64,
    pub validation_frac: f64,
    /// Explicit anchor-time ranges in microseconds; overrides the fractions.
    pub splits: Option<SplitRanges>,
    pub output_dir: PathBuf,
}

impl Default for BuildSection {
    fn default() -> Self {
        BuildSection {
            inputs: vec![PathBuf::from("stream.ndjson")],
            train_frac: 0.6,
            validation_frac: 0.2,
            splits: None,
            output_dir: PathBuf::from("dataset"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub birth_death: bool,
    pub glm: bool,
    pub levels: usize,
    pub n_paths: usize,
    pub price_reference: PriceReference,
    pub glm_options: GlmOptions,
    pub output_dir: PathBuf,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            birth_death: true,
            glm: true,
            levels: 5,
            n_paths: DEFAULT_PATHS,
            price_reference: PriceReference::Mid,
            glm_options: GlmOptions::default(),
            output_dir: PathBuf::from("benchmarks"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Models to score; empty means every trained head plus enabled benchmarks.
    pub models: Vec<String>,
    pub baseline: String,
    /// Test-period labels; the test range is cut into this many equal spans.
    pub periods: Vec<String>,
    pub output_dir: PathBuf,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            models: Vec::new(),
            baseline: "glm".into(),
            periods: vec!["test".into()],
            output_dir: PathBuf::from("eval"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Models to trade; empty means every model with saved forecasts.
    pub models: Vec<String>,
    pub output_dir: PathBuf,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { models: Vec::new(), output_dir: PathBuf::from("sim") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, overrides every per-section seed.
    pub seed: Option<u64>,
    /// Relative paths elsewhere in the config resolve against this.
    pub out_dir: PathBuf,
    /// Heads to train and evaluate.
    pub heads: Vec<String>,
    pub generator: GeneratorConfig,
    pub generate: GenerateSection,
    pub dataset: DatasetConfig,
    pub build: BuildSection,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub benchmarks: BenchmarkSection,
    pub evaluate: EvaluateSection,
    pub sim: SimConfig,
    pub simulate: SimulateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out_dir: PathBuf::from("out"),
            heads: vec!["poisson".into(), "neg_binomial".into(), "zero_trunc_poisson".into()],
            generator: GeneratorConfig::default(),
            generate: GenerateSection::default(),
            dataset: DatasetConfig::default(),
            build: BuildSection::default(),
            net: NetConfig::default(),
            train: TrainConfig::default(),
            benchmarks: BenchmarkSection::default(),
            evaluate: EvaluateSection::default(),
            sim: SimConfig::default(),
            simulate: SimulateSection::default(),
        }
    }
}

/// Parse an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| CliError::Usage(format!("override {spec:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key {key:?}")));
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::Usage(format!("{p} is not a section")))?;
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Load `path` (or defaults), then apply overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.propagate_seed();
        Ok(cfg)
    }

    pub fn load_str(text: &str) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.propagate_seed();
        Ok(cfg)
    }

    pub fn propagate_seed(&mut self) {
        if let Some(s) = self.seed {
            self.generator.seed = s;
            self.net.seed = s;
            self.train.seed = s;
            self.sim.seed = s;
        }
    }

    /// Resolve a configured path against `out_dir`.
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    /// SHA-256 of the canonical JSON form, with `out_dir` blanked so the same
    /// run in another directory hashes identically.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Provenance lines embedded in every output.
    pub fn provenance(&self, command: &str) -> Vec<String> {
        vec![format!("tickmix {VERSION} {command}"), format!("config_sha256 {}", self.hash()), format!("seeds {}", self.seed_summary())]
    }

    fn seed_summary(&self) -> String {
        format!("generator={} net={} train={} sim={}", self.generator.seed, self.net.seed, self.train.seed, self.sim.seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to toml")
    }
}
