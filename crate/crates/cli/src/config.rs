//! Flat `key=value` experiment configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. `preset` and `arch` are read first and fill in the defaults,
//! every other key then overrides one field. Unknown or repeated keys are
//! rejected.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use oad_core::distill::{KlOrder, LossWeights};
use oad_core::graph::{PerturbationKind, PerturbationSpec};
use oad_core::models::{presets, Arch, Benchmark, DiscriminatorConfig, ModelConfig};
use oad_core::train::{OptimizerKind, TrainConfig};

use crate::error::{CliError, Result};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "OAD_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Single,
    Kd,
    Fitnet,
    Dml,
    Oad,
    /// Independently trained students whose predictions are averaged.
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Single,
        Method::Kd,
        Method::Fitnet,
        Method::Dml,
        Method::Oad,
        Method::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::Kd => "kd",
            Method::Fitnet => "fitnet",
            Method::Dml => "dml",
            Method::Oad => "oad",
            Method::Ensemble => "ensemble",
        }
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, Method::Kd | Method::Fitnet)
    }

    pub fn is_group(self) -> bool {
        matches!(self, Method::Dml | Method::Oad | Method::Ensemble)
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Layer widths of an encoder without the class layer, which is sized
/// from the dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    /// GAT only: one entry per layer, class layer included.
    pub heads: Vec<usize>,
    pub dropout: f64,
}

impl ModelSpec {
    fn from_preset(config: ModelConfig) -> Self {
        let mut hidden = config.layer_dims.clone();
        hidden.pop();
        Self {
            hidden,
            heads: config.heads.clone(),
            dropout: config.dropout,
        }
    }

    pub fn build(&self, arch: Arch, num_classes: usize) -> Result<ModelConfig> {
        let mut dims = self.hidden.clone();
        dims.push(num_classes);
        let heads = if arch == Arch::Gat { self.heads.clone() } else { Vec::new() };
        let c = ModelConfig::new(arch, dims, heads).with_dropout(self.dropout);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Benchmark,
    pub dataset: PathBuf,
    pub method: Method,
    pub arch: Arch,
    pub student: ModelSpec,
    pub teacher: ModelSpec,
    /// Pretrained teacher to use instead of training (and caching) one.
    pub teacher_checkpoint: Option<PathBuf>,
    /// Discriminator widths before the final scoring unit.
    pub disc_hidden: Vec<usize>,
    pub train: TrainConfig,
    pub kd_alpha: f64,
    pub hint_weight: f64,
    pub perturbation: Option<PerturbationSpec>,
    /// Scale feature rows to sum to one after loading.
    pub normalize_features: bool,
    pub output: PathBuf,
    /// Seeds `train.seed .. train.seed + repeats`.
    pub repeats: usize,
}

fn list_to_string(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}

fn parse_value<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

impl ExperimentConfig {
    /// Defaults of a benchmark and architecture: the benchmark's model
    /// sizes and training schedule, method `oad`, four repeats.
    pub fn defaults(preset: Benchmark, arch: Arch) -> Self {
        let train = match preset {
            Benchmark::Ppi => TrainConfig::ppi(0),
            _ => TrainConfig::citation(0),
        };
        let disc = presets::discriminator(preset, arch).layer_dims;
        Self {
            preset,
            dataset: PathBuf::from(format!("{}.json", preset.name())),
            method: Method::Oad,
            arch,
            student: ModelSpec::from_preset(presets::student(preset, arch)),
            teacher: ModelSpec::from_preset(presets::teacher(preset, arch)),
            teacher_checkpoint: None,
            disc_hidden: disc[..disc.len() - 1].to_vec(),
            train,
            kd_alpha: 1.0,
            hint_weight: 1.0,
            perturbation: None,
            normalize_features: true,
            output: PathBuf::from("results"),
            repeats: 4,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// Parses `text`, then replaces or adds the `overrides` (reported as
    /// line 0 in errors).
    pub fn parse_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(CliError::Config {
                    line: i + 1,
                    msg: format!("duplicate key {key:?}"),
                });
            }
        }
        for (k, v) in overrides {
            entries.insert(k.trim().to_string(), (0, v.trim().to_string()));
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut entries: BTreeMap<String, (usize, String)>) -> Result<Self> {
        let preset = match entries.remove("preset") {
            Some((line, v)) => v.parse().map_err(|e: oad_core::Error| CliError::Config {
                line,
                msg: e.to_string(),
            })?,
            None => Benchmark::Cora,
        };
        let arch = match entries.remove("arch") {
            Some((line, v)) => v.parse().map_err(|e: oad_core::Error| CliError::Config {
                line,
                msg: e.to_string(),
            })?,
            None => Arch::Gcn,
        };
        let mut cfg = Self::defaults(preset, arch);
        let mut pert: BTreeMap<&str, (usize, String)> = BTreeMap::new();
        for (key, (line, value)) in entries {
            let err = |msg: String| CliError::Config { line, msg: format!("{key}: {msg}") };
            match key.as_str() {
                "perturbation.kind" => drop(pert.insert("kind", (line, value))),
                "perturbation.level" => drop(pert.insert("level", (line, value))),
                "perturbation.seed" => drop(pert.insert("seed", (line, value))),
                _ => cfg.set(&key, &value).map_err(err)?,
            }
        }
        if !pert.is_empty() {
            let line = pert.values().map(|(l, _)| *l).min().unwrap_or(0);
            let err = |msg: String| CliError::Config { line, msg: format!("perturbation: {msg}") };
            let kind = pert
                .get("kind")
                .ok_or_else(|| err("perturbation.kind is required".into()))?
                .1
                .parse::<PerturbationKind>()
                .map_err(|e| err(e.to_string()))?;
            let level = match pert.get("level") {
                Some((_, v)) => parse_value::<f64>(v).map_err(err)?,
                None => return Err(err("perturbation.level is required".into())),
            };
            let seed = match pert.get("seed") {
                Some((_, v)) => parse_value::<u64>(v).map_err(err)?,
                None => 0,
            };
            cfg.perturbation = Some(PerturbationSpec { kind, level, seed });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its key. `preset`, `arch` and the
    /// `perturbation.*` keys are handled by [`ExperimentConfig::parse`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "method" => self.method = value.parse()?,
            "output" => self.output = PathBuf::from(value),
            "repeats" => self.repeats = parse_value(value)?,
            "normalize_features" => self.normalize_features = parse_value(value)?,
            "group_size" => t.group_size = parse_value(value)?,
            "student.hidden" => self.student.hidden = parse_list(value)?,
            "student.heads" => self.student.heads = parse_list(value)?,
            "student.dropout" => self.student.dropout = parse_value(value)?,
            "teacher.hidden" => self.teacher.hidden = parse_list(value)?,
            "teacher.heads" => self.teacher.heads = parse_list(value)?,
            "teacher.dropout" => self.teacher.dropout = parse_value(value)?,
            "teacher.checkpoint" => {
                self.teacher_checkpoint = if value.is_empty() { None } else { Some(PathBuf::from(value)) }
            }
            "disc.hidden" => self.disc_hidden = parse_list(value)?,
            "train.epochs_warmup" => t.epochs_warmup = parse_value(value)?,
            "train.epochs_online" => t.epochs_online = parse_value(value)?,
            "train.optimizer" => t.optimizer.kind = value.parse::<OptimizerKind>().map_err(|e| e.to_string())?,
            "train.lr" => t.optimizer.lr = parse_value(value)?,
            "train.weight_decay" => t.optimizer.weight_decay = parse_value(value)?,
            "train.momentum" => t.optimizer.momentum = parse_value(value)?,
            "train.seed" => t.seed = parse_value(value)?,
            "train.alpha" => t.weights.alpha = parse_value(value)?,
            "train.beta" => t.weights.beta = parse_value(value)?,
            "train.temperature" => t.temperature = parse_value(value)?,
            "train.kl_order" => t.kl_order = value.parse::<KlOrder>().map_err(|e| e.to_string())?,
            "kd.alpha" => self.kd_alpha = parse_value(value)?,
            "fitnet.weight" => self.hint_weight = parse_value(value)?,
            "preset" | "arch" | "perturbation.kind" | "perturbation.level" | "perturbation.seed" => {
                return Err("can only be set in a config file".into())
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Canonical key=value pairs, in the order they are written.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let mut v = vec![
            ("preset", self.preset.name().to_string()),
            ("arch", self.arch.name().to_string()),
            ("dataset", self.dataset.display().to_string()),
            ("method", self.method.name().to_string()),
            ("output", self.output.display().to_string()),
            ("repeats", self.repeats.to_string()),
            ("normalize_features", self.normalize_features.to_string()),
            ("group_size", t.group_size.to_string()),
            ("student.hidden", list_to_string(&self.student.hidden)),
            ("student.heads", list_to_string(&self.student.heads)),
            ("student.dropout", self.student.dropout.to_string()),
            ("teacher.hidden", list_to_string(&self.teacher.hidden)),
            ("teacher.heads", list_to_string(&self.teacher.heads)),
            ("teacher.dropout", self.teacher.dropout.to_string()),
            (
                "teacher.checkpoint",
                self.teacher_checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("disc.hidden", list_to_string(&self.disc_hidden)),
            ("train.epochs_warmup", t.epochs_warmup.to_string()),
            ("train.epochs_online", t.epochs_online.to_string()),
            ("train.optimizer", t.optimizer.kind.name().to_string()),
            ("train.lr", t.optimizer.lr.to_string()),
            ("train.weight_decay", t.optimizer.weight_decay.to_string()),
            ("train.momentum", t.optimizer.momentum.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.alpha", t.weights.alpha.to_string()),
            ("train.beta", t.weights.beta.to_string()),
            ("train.temperature", t.temperature.to_string()),
            ("train.kl_order", t.kl_order.name().to_string()),
            ("kd.alpha", self.kd_alpha.to_string()),
            ("fitnet.weight", self.hint_weight.to_string()),
        ];
        if let Some(p) = &self.perturbation {
            v.push(("perturbation.kind", p.kind.name().to_string()));
            v.push(("perturbation.level", p.level.to_string()));
            v.push(("perturbation.seed", p.seed.to_string()));
        }
        v
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(CliError::Invalid(m));
        self.train.validate()?;
        if self.repeats == 0 {
            return invalid("repeats must be at least 1".into());
        }
        for (name, spec) in [("student", &self.student), ("teacher", &self.teacher)] {
            if !(0.0..1.0).contains(&spec.dropout) {
                return invalid(format!("{name}.dropout {} outside [0, 1)", spec.dropout));
            }
            if spec.hidden.contains(&0) {
                return invalid(format!("{name}.hidden widths must be positive"));
            }
            if self.arch == Arch::Gat && spec.heads.len() != spec.hidden.len() + 1 {
                return invalid(format!(
                    "{name}.heads needs {} entries (one per layer), got {}",
                    spec.hidden.len() + 1,
                    spec.heads.len()
                ));
            }
        }
        if self.disc_hidden.contains(&0) {
            return invalid("disc.hidden widths must be positive".into());
        }
        for (name, w) in [("kd.alpha", self.kd_alpha), ("fitnet.weight", self.hint_weight)] {
            if !(w >= 0.0 && w.is_finite()) {
                return invalid(format!("{name} {w} must be non-negative"));
            }
        }
        if self.method == Method::Fitnet && self.student.hidden.is_empty() {
            return invalid("fitnet needs a student with a hidden layer".into());
        }
        if !self.method.is_group() && self.train.group_size != 1 {
            log::debug!("group_size ignored by method {}", self.method.name());
        }
        if let Some(p) = &self.perturbation {
            p.validate()?;
        }
        Ok(())
    }

    pub fn discriminator(&self) -> DiscriminatorConfig {
        let mut dims = self.disc_hidden.clone();
        dims.push(1);
        DiscriminatorConfig::new(dims)
    }

    /// Training settings with the method's own adjustments: `dml` drops
    /// the adversarial term and `ensemble` both distillation terms.
    pub fn train_for(&self, method: Method, seed: u64) -> TrainConfig {
        let weights = match method {
            Method::Dml => LossWeights {
                alpha: 0.0,
                ..self.train.weights
            },
            Method::Ensemble => LossWeights { alpha: 0.0, beta: 0.0 },
            _ => self.train.weights,
        };
        TrainConfig {
            seed,
            weights,
            ..self.train
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repeats as u64).map(|i| self.train.seed.wrapping_add(i))
    }

    /// Output directory, placed under `$OAD_OUTPUT_ROOT` when that is set
    /// and the configured path is relative.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output.is_relative() => PathBuf::from(root).join(&self.output),
            _ => self.output.clone(),
        }
    }
}
