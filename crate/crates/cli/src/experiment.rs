use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use oad_core::graph::{GraphDataset, PerturbationSpec};
use oad_core::models::{count_parameters, group_parameter_total, Checkpoint, ModelConfig, StudentModel};
use oad_core::train::{
    pretrain_teacher, train_dml, train_fitnet, train_kd, train_oad, train_single, GroupOutcome, RunSummary,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Method};
use crate::error::{CliError, Result};
use crate::output::{write_atomic, write_csv};

/// One training run (one method, one seed, one perturbation level).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub dataset: String,
    pub arch: String,
    pub group_size: usize,
    pub seed: u64,
    pub perturbation: String,
    pub level: f64,
    /// The method's headline test metric: the ensemble for `ensemble`,
    /// otherwise the best student at its best validation epoch.
    pub metric: f64,
    pub best_student: usize,
    pub best_val: f64,
    pub best_test: f64,
    pub ensemble_test: f64,
    pub final_test: f64,
    pub student_params: usize,
    /// Everything trained by the method: all students plus discriminators.
    pub total_params: usize,
    /// Zero for methods without a teacher.
    pub teacher_params: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub dataset: String,
    pub arch: String,
    pub group_size: usize,
    pub perturbation: String,
    pub level: f64,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; empty for a single run.
    pub std: Option<f64>,
    pub ensemble_mean: f64,
    pub ensemble_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRow {
    pub method: String,
    pub seed: u64,
    pub epoch: usize,
    pub phase: String,
    pub student: usize,
    pub ce: f64,
    pub l_g: Option<f64>,
    pub l_b: Option<f64>,
    pub l_d: Option<f64>,
    pub total: f64,
    pub val: f64,
    pub test: f64,
    pub ensemble_val: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TimingRow {
    pub method: String,
    pub seed: u64,
    pub group_size: usize,
    pub level: f64,
    pub seconds: f64,
}

/// Per-level comparison of the dynamic-graph suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaRow {
    pub perturbation: String,
    pub level: f64,
    pub runs: usize,
    pub student: f64,
    pub kd: f64,
    pub oad: f64,
    pub kd_minus_student: f64,
    pub oad_minus_student: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug)]
pub struct DynamicOutput {
    pub dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub deltas: Vec<DeltaRow>,
}

/// Mean and sample standard deviation (`None` for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Loads the configured dataset, normalizing features when asked.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<GraphDataset> {
    let ds = GraphDataset::load(&cfg.dataset).map_err(|e| match e {
        oad_core::Error::Io(io) => CliError::io(&cfg.dataset, io),
        other => CliError::input(&cfg.dataset, other.to_string()),
    })?;
    Ok(if cfg.normalize_features { ds.row_normalized_features() } else { ds })
}

fn dataset_digest(ds: &GraphDataset) -> Result<String> {
    let mut h = Sha256::new();
    h.update(ds.to_json_string()?.as_bytes());
    Ok(hex(&h.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretrained teachers, cached under `<output>/teachers` by a digest of the
/// dataset, the teacher configuration and the training settings.
pub struct TeacherCache {
    dir: PathBuf,
    dataset_digest: String,
}

impl TeacherCache {
    pub fn new(output_dir: &Path, clean: &GraphDataset) -> Result<Self> {
        Ok(Self {
            dir: output_dir.join("teachers"),
            dataset_digest: dataset_digest(clean)?,
        })
    }

    fn key(&self, config: &ModelConfig, cfg: &ExperimentConfig, seed: u64) -> String {
        let train = cfg.train_for(Method::Single, seed);
        let mut h = Sha256::new();
        h.update(self.dataset_digest.as_bytes());
        h.update(format!("{config:?}").as_bytes());
        h.update(format!("{train:?}").as_bytes());
        hex(&h.finalize()[..16])
    }

    pub fn path(&self, config: &ModelConfig, cfg: &ExperimentConfig, seed: u64) -> PathBuf {
        self.dir.join(format!("{}.json", self.key(config, cfg, seed)))
    }

    /// The configured checkpoint if there is one, else a cached teacher,
    /// else a freshly pretrained (and cached) one.
    pub fn teacher(&self, cfg: &ExperimentConfig, clean: &GraphDataset, seed: u64) -> Result<StudentModel> {
        if let Some(p) = &cfg.teacher_checkpoint {
            return Ok(Checkpoint::load(p)?.into_student()?);
        }
        let config = cfg.teacher.build(cfg.arch, clean.num_classes())?;
        let path = self.path(&config, cfg, seed);
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            info!("using cached teacher {}", path.display());
            return Ok(Checkpoint::from_json_str(&text)?.into_student()?);
        }
        info!("pretraining teacher (seed {seed})");
        let out = pretrain_teacher(clean, config, cfg.train_for(Method::Single, seed))?;
        let teacher = out.students.into_iter().next().expect("one teacher");
        write_atomic(&path, Checkpoint::from_student(&teacher).to_json_string()?.as_bytes())?;
        Ok(teacher)
    }
}

/// Everything needed to run one method on one dataset view.
pub struct Run<'a> {
    pub cfg: &'a ExperimentConfig,
    /// The graphs the students train on (possibly perturbed).
    pub data: &'a GraphDataset,
    /// The unperturbed graphs the teacher is pretrained on.
    pub clean: &'a GraphDataset,
    pub teachers: &'a TeacherCache,
    pub perturbation: Option<PerturbationSpec>,
}

pub struct MethodResult {
    pub row: ResultRow,
    pub epochs: Vec<EpochRow>,
    pub seconds: f64,
    /// Final-epoch students.
    pub students: Vec<StudentModel>,
}

fn headline(method: Method, s: &RunSummary) -> f64 {
    match method {
        Method::Ensemble => s.ensemble.test,
        _ => s.reported_test(),
    }
}

fn epoch_rows(method: Method, seed: u64, out: &GroupOutcome) -> Vec<EpochRow> {
    out.reports
        .iter()
        .flat_map(|r| {
            r.students.iter().enumerate().map(move |(m, l)| EpochRow {
                method: method.name().to_string(),
                seed,
                epoch: r.epoch,
                phase: r.phase.name().to_string(),
                student: m,
                ce: l.ce,
                l_g: l.l_g,
                l_b: l.l_b,
                l_d: r.l_d,
                total: l.total,
                val: r.val[m],
                test: r.test[m],
                ensemble_val: r.ensemble_val,
            })
        })
        .collect()
}

impl Run<'_> {
    pub fn method(&self, method: Method, seed: u64, group_size: usize) -> Result<MethodResult> {
        let cfg = self.cfg;
        let ds = self.data;
        let k = ds.num_classes();
        let d = ds.num_features();
        let student = cfg.student.build(cfg.arch, k)?;
        let m = if method.is_group() { group_size } else { 1 };
        let train = oad_core::train::TrainConfig {
            group_size: m,
            ..cfg.train_for(method, seed)
        };
        let disc = cfg.discriminator();
        let teacher = if method.needs_teacher() {
            Some(self.teachers.teacher(cfg, self.clean, seed)?)
        } else {
            None
        };
        let start = Instant::now();
        let out = match method {
            Method::Single => train_single(ds, student.clone(), train)?,
            Method::Kd => train_kd(ds, teacher.as_ref().unwrap(), self.clean, student.clone(), train, cfg.kd_alpha)?,
            Method::Fitnet => {
                train_fitnet(ds, teacher.as_ref().unwrap(), self.clean, student.clone(), train, cfg.hint_weight)?
            }
            Method::Dml => train_dml(ds, vec![student.clone(); m], train)?,
            Method::Oad => train_oad(ds, vec![student.clone(); m], Some(disc.clone()), train)?,
            Method::Ensemble => train_oad(ds, vec![student.clone(); m], None, train)?,
        };
        let seconds = start.elapsed().as_secs_f64();

        let student_params = count_parameters(&student, d);
        for s in &out.students {
            if s.num_parameters() != student_params {
                return Err(CliError::Invalid(format!(
                    "allocated {} parameters but the formula gives {student_params}",
                    s.num_parameters()
                )));
            }
        }
        let total_params = match method {
            Method::Oad if m >= 2 => group_parameter_total(m, &student, &disc, d),
            _ => m * student_params,
        };
        let teacher_params = teacher.as_ref().map_or(0, |t| count_parameters(t.config(), t.input_dim()));
        let s = &out.summary;
        let (perturbation, level) = match &self.perturbation {
            Some(p) => (p.kind.name().to_string(), p.level),
            None => ("none".to_string(), 0.0),
        };
        let row = ResultRow {
            method: method.name().to_string(),
            dataset: ds.name().to_string(),
            arch: cfg.arch.name().to_string(),
            group_size: m,
            seed,
            perturbation,
            level,
            metric: headline(method, s),
            best_student: s.best_student,
            best_val: s.students[s.best_student].val,
            best_test: s.reported_test(),
            ensemble_test: s.ensemble.test,
            final_test: s.final_test[s.best_student],
            student_params,
            total_params,
            teacher_params,
        };
        info!(
            "{} seed {seed} M={m}: test {:.4} ({seconds:.1}s)",
            method.name(),
            row.metric
        );
        Ok(MethodResult {
            epochs: epoch_rows(method, seed, &out),
            row,
            seconds,
            students: out.students,
        })
    }
}

/// Groups rows by (method, group size, perturbation, level) in order of
/// first appearance and summarizes each group.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize, String, u64)> = Vec::new();
    for r in rows {
        let k = (r.method.clone(), r.group_size, r.perturbation.clone(), r.level.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, group_size, perturbation, level)| {
            let sel: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| {
                    r.method == method
                        && r.group_size == group_size
                        && r.perturbation == perturbation
                        && r.level.to_bits() == level
                })
                .collect();
            let (mean, std) = mean_std(&sel.iter().map(|r| r.metric).collect::<Vec<_>>());
            let (ensemble_mean, ensemble_std) = mean_std(&sel.iter().map(|r| r.ensemble_test).collect::<Vec<_>>());
            SummaryRow {
                method,
                dataset: sel[0].dataset.clone(),
                arch: sel[0].arch.clone(),
                group_size,
                perturbation,
                level: f64::from_bits(level),
                runs: sel.len(),
                mean,
                std,
                ensemble_mean,
                ensemble_std,
            }
        })
        .collect()
}

fn prepare(cfg: &ExperimentConfig) -> Result<(PathBuf, GraphDataset, TeacherCache)> {
    let dir = cfg.output_dir();
    let clean = load_dataset(cfg)?;
    let teachers = TeacherCache::new(&dir, &clean)?;
    write_atomic(&dir.join("config.txt"), cfg.to_text().as_bytes())?;
    Ok((dir, clean, teachers))
}

fn timing(r: &MethodResult) -> TimingRow {
    TimingRow {
        method: r.row.method.clone(),
        seed: r.row.seed,
        group_size: r.row.group_size,
        level: r.row.level,
        seconds: r.seconds,
    }
}

/// Runs the configured method for every seed. Writes `results.csv`,
/// `summary.csv`, `epochs.csv` and `timing.csv`; wall-clock times live
/// only in the last so the others are reproducible byte for byte. The
/// final-epoch students go to `checkpoints/<method>-seed<seed>-student<m>.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (dir, clean, teachers) = prepare(cfg)?;
    let data = match &cfg.perturbation {
        Some(p) => p.apply(&clean)?,
        None => clean.clone(),
    };
    let run = Run {
        cfg,
        data: &data,
        clean: &clean,
        teachers: &teachers,
        perturbation: cfg.perturbation,
    };
    let mut rows = Vec::new();
    let mut epochs = Vec::new();
    let mut times = Vec::new();
    for seed in cfg.seeds() {
        let r = run.method(cfg.method, seed, cfg.train.group_size)?;
        for (m, student) in r.students.iter().enumerate() {
            let path = dir.join("checkpoints").join(format!("{}-seed{seed}-student{m}.json", cfg.method.name()));
            write_atomic(&path, Checkpoint::from_student(student).to_json_string()?.as_bytes())?;
        }
        times.push(timing(&r));
        epochs.extend(r.epochs);
        rows.push(r.row);
    }
    let summary = summarize(&rows);
    write_csv(&dir.join("results.csv"), "results", &rows)?;
    write_csv(&dir.join("summary.csv"), "summary", &summary)?;
    write_csv(&dir.join("epochs.csv"), "epochs", &epochs)?;
    write_csv(&dir.join("timing.csv"), "timing", &times)?;
    Ok(RunOutput { dir, rows, summary })
}

/// Noise standard deviations of the attribute-noise sweep.
pub const NOISE_LEVELS: [f64; 6] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
/// Removed edge proportions of the edge-removal sweep.
pub const REMOVAL_LEVELS: [f64; 6] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3];

/// For every level: perturb the graphs, then train a single student, a
/// student distilled from a teacher pretrained on the clean graphs, and an
/// OAD group, all on the perturbed graphs. Writes `dynamic_results.csv`,
/// `dynamic_summary.csv`, `dynamic_deltas.csv` and `dynamic_timing.csv`.
pub fn run_dynamic_suite(cfg: &ExperimentConfig, levels: &[f64]) -> Result<DynamicOutput> {
    let base = cfg
        .perturbation
        .ok_or_else(|| CliError::Invalid("the dynamic suite needs perturbation.kind".into()))?;
    if levels.is_empty() {
        return Err(CliError::Invalid("no perturbation levels given".into()));
    }
    let (dir, clean, teachers) = prepare(cfg)?;
    let mut rows = Vec::new();
    let mut times = Vec::new();
    let mut deltas = Vec::new();
    for &level in levels {
        let spec = PerturbationSpec { level, ..base };
        let data = spec.apply(&clean)?;
        let run = Run {
            cfg,
            data: &data,
            clean: &clean,
            teachers: &teachers,
            perturbation: Some(spec),
        };
        let mut per_method = [Vec::new(), Vec::new(), Vec::new()];
        for seed in cfg.seeds() {
            for (i, method) in [Method::Single, Method::Kd, Method::Oad].into_iter().enumerate() {
                let r = run.method(method, seed, cfg.train.group_size)?;
                times.push(timing(&r));
                per_method[i].push(r.row.metric);
                rows.push(r.row);
            }
        }
        let [s, k, o] = per_method.map(|v| mean_std(&v).0);
        deltas.push(DeltaRow {
            perturbation: spec.kind.name().to_string(),
            level,
            runs: cfg.repeats,
            student: s,
            kd: k,
            oad: o,
            kd_minus_student: k - s,
            oad_minus_student: o - s,
        });
    }
    let summary = summarize(&rows);
    write_csv(&dir.join("dynamic_results.csv"), "dynamic-results", &rows)?;
    write_csv(&dir.join("dynamic_summary.csv"), "dynamic-summary", &summary)?;
    write_csv(&dir.join("dynamic_deltas.csv"), "dynamic-deltas", &deltas)?;
    write_csv(&dir.join("dynamic_timing.csv"), "timing", &times)?;
    Ok(DynamicOutput {
        dir,
        rows,
        summary,
        deltas,
    })
}

/// One OAD run per group size and seed. Writes `sweep_results.csv`,
/// `sweep_summary.csv` and `sweep_timing.csv`. Trends are reported, not
/// checked.
pub fn run_group_size_sweep(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<RunOutput> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::Invalid("group sizes must be at least 1".into()));
    }
    let (dir, clean, teachers) = prepare(cfg)?;
    let data = match &cfg.perturbation {
        Some(p) => p.apply(&clean)?,
        None => clean.clone(),
    };
    let run = Run {
        cfg,
        data: &data,
        clean: &clean,
        teachers: &teachers,
        perturbation: cfg.perturbation,
    };
    let mut rows = Vec::new();
    let mut times = Vec::new();
    for &m in sizes {
        for seed in cfg.seeds() {
            let r = run.method(Method::Oad, seed, m)?;
            times.push(timing(&r));
            rows.push(r.row);
        }
    }
    let summary = summarize(&rows);
    write_csv(&dir.join("sweep_results.csv"), "sweep-results", &rows)?;
    write_csv(&dir.join("sweep_summary.csv"), "sweep-summary", &summary)?;
    write_csv(&dir.join("sweep_timing.csv"), "timing", &times)?;
    Ok(RunOutput { dir, rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_statistics() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s.unwrap() - 1.2909944487358056).abs() < 1e-12);
        assert_eq!(mean_std(&[0.7]), (0.7, None));
    }
}
