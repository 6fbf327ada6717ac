//! Sectioned key=value configuration: parsing, defaults, and overrides.
//!
//! The format is line-based UTF-8. `[section]` opens a section, `key = value`
//! assigns within it, `#` starts a comment, blank lines are ignored. Unknown
//! sections or keys are hard errors so typos never pass silently. Every field
//! has a default; a config file only lists what it changes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};

/// Parsed `[section] key = value` text, order-preserving within sections.
#[derive(Debug, Default, Clone)]
pub struct KvTable {
    /// `(section, key) -> value`; section is `""` before any header.
    entries: BTreeMap<(String, String), String>,
}

impl KvTable {
    pub fn parse(text: &str) -> Result<KvTable> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse(format!("line {}: unclosed section header", lineno + 1)))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::Parse(format!("line {}: empty section name", lineno + 1)));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
            }
            entries.insert((section.clone(), key.to_string()), value.trim().to_string());
        }
        Ok(KvTable { entries })
    }

    /// Apply a `section.key=value` override string.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form section.key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form section.key=value")))?;
        if section.is_empty() || key.is_empty() {
            return Err(Error::Config(format!("override `{spec}` has an empty section or key")));
        }
        self.entries
            .insert((section.to_string(), key.to_string()), value.trim().to_string());
        Ok(())
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    /// Error out if anything was never consumed: unknown keys are hard errors.
    fn finish(self) -> Result<()> {
        if let Some(((section, key), _)) = self.entries.into_iter().next() {
            return Err(Error::Config(format!("unknown config key `{section}.{key}`")));
        }
        Ok(())
    }
}

/// A typed reader over one section that records which keys it consumed.
struct Section<'a> {
    table: &'a mut KvTable,
    name: &'a str,
}

impl<'a> Section<'a> {
    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.table.take(self.name, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{}.{key}: `{v}` is not a non-negative integer", self.name))),
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.table.take(self.name, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{}.{key}: `{v}` is not a non-negative integer", self.name))),
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.table.take(self.name, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{}.{key}: `{v}` is not a number", self.name))),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.table.take(self.name, key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("{}.{key}: `{v}` is not a boolean", self.name))),
            },
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.table.take(self.name, key).unwrap_or_else(|| default.to_string())
    }
}

/// Model section defaults: a small two-column attention model.
pub fn default_model_config() -> ModelConfig {
    ModelConfig {
        variant: Variant::DeepAtt,
        n_e: 2,
        n_d: 2,
        columns: 2,
        emb_dim: 64,
        cell_width: 64,
        src_vocab: crate::corpus::SPECIALS,
        tgt_vocab: crate::corpus::SPECIALS,
        p_drop: 0.0,
        ff_enabled: true,
        attention_hidden: 64,
        projection_factor: 4,
    }
}

fn read_model(table: &mut KvTable) -> Result<ModelConfig> {
    let mut s = Section { table, name: "model" };
    let d = default_model_config();
    let variant = {
        let v = s.string("variant", d.variant.name());
        Variant::parse(&v)?
    };
    let cell_width = s.usize("cell_width", d.cell_width)?;
    let cfg = ModelConfig {
        variant,
        n_e: s.usize("n_e", d.n_e)?,
        n_d: s.usize("n_d", d.n_d)?,
        columns: s.usize("columns", d.columns)?,
        emb_dim: s.usize("emb_dim", d.emb_dim)?,
        cell_width,
        src_vocab: s.usize("src_vocab", d.src_vocab)?,
        tgt_vocab: s.usize("tgt_vocab", d.tgt_vocab)?,
        p_drop: s.f64("p_drop", d.p_drop)?,
        ff_enabled: s.bool("ff", d.ff_enabled)?,
        attention_hidden: s.usize("att_hidden", cell_width)?,
        projection_factor: s.usize("projection_factor", d.projection_factor)?,
    };
    Ok(cfg)
}

/// Serialize a model configuration as a `[model]` section.
pub fn model_to_kv(cfg: &ModelConfig) -> String {
    let mut out = String::from("[model]\n");
    let _ = writeln!(out, "variant = {}", cfg.variant.name());
    let _ = writeln!(out, "n_e = {}", cfg.n_e);
    let _ = writeln!(out, "n_d = {}", cfg.n_d);
    let _ = writeln!(out, "columns = {}", cfg.columns);
    let _ = writeln!(out, "emb_dim = {}", cfg.emb_dim);
    let _ = writeln!(out, "cell_width = {}", cfg.cell_width);
    let _ = writeln!(out, "src_vocab = {}", cfg.src_vocab);
    let _ = writeln!(out, "tgt_vocab = {}", cfg.tgt_vocab);
    let _ = writeln!(out, "p_drop = {}", cfg.p_drop);
    let _ = writeln!(out, "ff = {}", cfg.ff_enabled);
    let _ = writeln!(out, "att_hidden = {}", cfg.attention_hidden);
    let _ = writeln!(out, "projection_factor = {}", cfg.projection_factor);
    out
}

/// Parse a standalone `[model]` section (checkpoint headers use this).
pub fn model_from_kv(text: &str) -> Result<ModelConfig> {
    let mut table = KvTable::parse(text)?;
    let cfg = read_model(&mut table)?;
    table.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Beam-search settings; the emission cap is computed per sentence as
/// `max_len_factor * source_len + max_len_extra`.
#[derive(Debug, Clone)]
pub struct BeamSettings {
    pub width: usize,
    pub max_len_factor: usize,
    pub max_len_extra: usize,
}

impl Default for BeamSettings {
    fn default() -> Self {
        BeamSettings { width: 3, max_len_factor: 3, max_len_extra: 10 }
    }
}

impl BeamSettings {
    pub fn cap_for(&self, source_len: usize) -> usize {
        self.max_len_factor * source_len + self.max_len_extra
    }
}

/// File locations used by the command-line entry points.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub train_source: String,
    pub train_target: String,
    pub dev_source: String,
    pub dev_target: String,
    pub src_vocab: String,
    pub tgt_vocab: String,
    pub out_dir: String,
    pub word_map: String,
}

/// Merged view of everything a run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: crate::trainer::TrainConfig,
    pub beam: BeamSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: default_model_config(),
            train: crate::trainer::TrainConfig::default(),
            beam: BeamSettings::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Parse config text plus `section.key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut table = KvTable::parse(text)?;
        for o in overrides {
            table.set_override(o)?;
        }
        let model = read_model(&mut table)?;
        let train = {
            let mut s = Section { table: &mut table, name: "train" };
            let d = crate::trainer::TrainConfig::default();
            crate::trainer::TrainConfig {
                l_r: s.f64("l_r", d.l_r)?,
                l_f: s.f64("l_f", d.l_f)?,
                r: s.f64("r", d.r)?,
                p_d: s.f64("p_d", d.p_d)?,
                batch_size: s.usize("batch_size", d.batch_size)?,
                max_epochs: s.usize("max_epochs", d.max_epochs)?,
                max_len: s.usize("max_len", d.max_len)?,
                adam_beta1: s.f64("adam_beta1", d.adam_beta1)?,
                adam_beta2: s.f64("adam_beta2", d.adam_beta2)?,
                adam_eps: s.f64("adam_eps", d.adam_eps)?,
                seed: s.u64("seed", d.seed)?,
                checkpoint_every: s.usize("checkpoint_every", d.checkpoint_every)?,
                max_events: s.usize("max_events", d.max_events)?,
            }
        };
        let beam = {
            let mut s = Section { table: &mut table, name: "beam" };
            let d = BeamSettings::default();
            BeamSettings {
                width: s.usize("width", d.width)?,
                max_len_factor: s.usize("max_len_factor", d.max_len_factor)?,
                max_len_extra: s.usize("max_len_extra", d.max_len_extra)?,
            }
        };
        let paths = {
            let mut s = Section { table: &mut table, name: "paths" };
            Paths {
                train_source: s.string("train_source", ""),
                train_target: s.string("train_target", ""),
                dev_source: s.string("dev_source", ""),
                dev_target: s.string("dev_target", ""),
                src_vocab: s.string("src_vocab", ""),
                tgt_vocab: s.string("tgt_vocab", ""),
                out_dir: s.string("out_dir", "out"),
                word_map: s.string("word_map", ""),
            }
        };
        table.finish()?;
        train.validate()?;
        if beam.width < 1 {
            return Err(Error::Config("beam.width must be >= 1".to_string()));
        }
        Ok(RunConfig { model, train, beam, paths })
    }
}
