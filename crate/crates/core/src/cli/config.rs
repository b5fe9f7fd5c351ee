use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::discovery::DiscoveryConfig;
use crate::error::{Error, Result};
use crate::pipeline::Mode;
use crate::typeid::TypeIdConfig;
use crate::valueex::ValueExConfig;

pub const OUTPUT_DIR_ENV: &str = "SPC_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "spc-out";

/// Everything a run needs. Read from a TOML file, then patched by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub split: Split,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub mode: Mode,
    pub disable_speaker_module: bool,
    pub disable_pretrained_context: bool,
    pub max_exemplars: usize,
    pub discovery: DiscoveryConfig,
    pub typeid: TypeIdConfig,
    pub valueex: ValueExConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            split: Split::Test,
            seed: None,
            output_dir: None,
            mode: Mode::Standalone,
            disable_speaker_module: false,
            disable_pretrained_context: false,
            max_exemplars: 10,
            discovery: DiscoveryConfig::default(),
            typeid: TypeIdConfig::default(),
            valueex: ValueExConfig::default(),
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    /// Parse a config file, applying `overrides` (`dotted.key=value`, value
    /// in TOML syntax or a bare string) on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse().map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            set_key(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(config_error)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn corpus(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::Config("no corpus given (config `corpus` or --corpus)".into()))
    }

    /// Flag, then config file, then the environment, then `spc-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Push the run-wide seed and ablation flags into the model sections.
    pub fn resolved(&self) -> Result<Self> {
        let seed = self.seed()?;
        let mut c = self.clone();
        c.discovery.encoder.seed = seed;
        c.typeid.encoder.seed = seed;
        c.valueex.encoder.seed = seed;
        c.typeid.disable_speaker_module = self.disable_speaker_module;
        c.typeid.disable_pretrained_context = self.disable_pretrained_context;
        Ok(c)
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

fn set_key(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
