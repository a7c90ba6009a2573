use std::time::Instant;

use log::{debug, info};
use serde::Serialize;

use super::config::{discriminator_seed, dropout_stream, student_seed, TrainConfig};
use super::metrics::{probabilities, select_best, MetricAccumulator, Metrics};
use super::optim::Optimizer;
use crate::autodiff::{Tape, Tensor, Var};
use crate::distill::{
    cyclic_pairs, discriminator_loss, fitnet_loss, generator_term, global_kd_loss_from_logits, peer_average,
    softened_probs_value, supervised_loss,
};
use crate::error::{Error, Result};
use crate::graph::{GraphDataset, PreparedGraph, Split};
use crate::matrix::Matrix;
use crate::rng::seeded_rng;
use crate::models::{glorot, Access, Discriminator, DiscriminatorConfig, Mode, ModelConfig, StudentModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Independent cross-entropy training of every student.
    Warmup,
    /// Online distillation.
    Online,
    /// Single-model baselines (plain, teacher-guided or hint-guided).
    Baseline,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Online => "online",
            Phase::Baseline => "baseline",
        }
    }
}

/// Losses of one student, averaged over the steps of an epoch. Terms that
/// were not computed are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StudentLosses {
    pub ce: f64,
    pub l_g: Option<f64>,
    pub l_b: Option<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub phase: Phase,
    pub students: Vec<StudentLosses>,
    /// Discriminator loss, when discriminators were updated.
    pub l_d: Option<f64>,
    /// Per-student validation metric (accuracy, or micro-F1 for
    /// multi-label data).
    pub val: Vec<f64>,
    pub test: Vec<f64>,
    pub ensemble_val: f64,
    pub ensemble_test: f64,
    /// Wall-clock time of the epoch. Not part of any deterministic output.
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BestRecord {
    pub epoch: usize,
    pub val: f64,
    /// Test metric at the best validation epoch.
    pub test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub multi_label: bool,
    /// Student with the best validation metric (lowest index on ties).
    pub best_student: usize,
    pub students: Vec<BestRecord>,
    pub ensemble: BestRecord,
    pub final_val: Vec<f64>,
    pub final_test: Vec<f64>,
    pub final_ensemble_val: f64,
    pub final_ensemble_test: f64,
}

impl RunSummary {
    /// Test metric of the selected student at its best validation epoch.
    pub fn reported_test(&self) -> f64 {
        self.students[self.best_student].test
    }

    fn from_reports(reports: &[EpochReport], snapshot: Option<&EvalSnapshot>, multi_label: bool) -> Self {
        let first = reports.first();
        let m = first.map_or_else(|| snapshot.map_or(0, |s| s.val.len()), |r| r.val.len());
        let seed = |val: f64, test: f64| BestRecord { epoch: 0, val, test };
        let mut students: Vec<BestRecord> = match (first, snapshot) {
            (Some(r), _) => (0..m).map(|i| BestRecord { epoch: r.epoch, val: r.val[i], test: r.test[i] }).collect(),
            (None, Some(s)) => (0..m).map(|i| seed(s.val[i], s.test[i])).collect(),
            (None, None) => Vec::new(),
        };
        let mut ensemble = match (first, snapshot) {
            (Some(r), _) => BestRecord { epoch: r.epoch, val: r.ensemble_val, test: r.ensemble_test },
            (None, Some(s)) => seed(s.ensemble_val, s.ensemble_test),
            (None, None) => seed(f64::NAN, f64::NAN),
        };
        for r in reports.iter().skip(1) {
            for (i, b) in students.iter_mut().enumerate() {
                if r.val[i] > b.val {
                    *b = BestRecord { epoch: r.epoch, val: r.val[i], test: r.test[i] };
                }
            }
            if r.ensemble_val > ensemble.val {
                ensemble = BestRecord { epoch: r.epoch, val: r.ensemble_val, test: r.ensemble_test };
            }
        }
        let (final_val, final_test, fev, fet) = match (reports.last(), snapshot) {
            (Some(r), _) => (r.val.clone(), r.test.clone(), r.ensemble_val, r.ensemble_test),
            (None, Some(s)) => (s.val.clone(), s.test.clone(), s.ensemble_val, s.ensemble_test),
            (None, None) => (Vec::new(), Vec::new(), f64::NAN, f64::NAN),
        };
        let best_vals: Vec<f64> = students.iter().map(|b| b.val).collect();
        Self {
            multi_label,
            best_student: select_best(&best_vals),
            students,
            ensemble,
            final_val,
            final_test,
            final_ensemble_val: fev,
            final_ensemble_test: fet,
        }
    }
}

/// Trained models with their per-epoch reports. Model parameters are
/// those of the final epoch.
#[derive(Debug)]
pub struct GroupOutcome {
    pub students: Vec<StudentModel>,
    pub discriminators: Vec<Discriminator>,
    pub reports: Vec<EpochReport>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSnapshot {
    pub val: Vec<f64>,
    pub test: Vec<f64>,
    pub ensemble_val: f64,
    pub ensemble_test: f64,
}

/// Extra training signal of a single-model baseline.
enum Guidance {
    None,
    /// Softened teacher outputs per graph, weighted by `alpha`.
    Teacher { targets: Vec<Option<Matrix>>, alpha: f64 },
    /// Teacher hidden embeddings per graph, matched through a learned
    /// projection and weighted by `weight`.
    Hint { hidden: Vec<Option<Matrix>>, projection: Tensor, optimizer: Optimizer, weight: f64 },
}

/// Owns a group of students (and their discriminators) and runs the
/// two-phase training schedule.
pub struct GroupTrainer<'a> {
    dataset: &'a GraphDataset,
    graphs: Vec<PreparedGraph>,
    train_graphs: Vec<usize>,
    cfg: TrainConfig,
    students: Vec<StudentModel>,
    student_opts: Vec<Optimizer>,
    discriminators: Vec<Discriminator>,
    disc_opts: Vec<Optimizer>,
    guidance: Guidance,
    baseline: bool,
}

fn diverged(e: Error, what: impl FnOnce() -> String) -> Error {
    match e {
        Error::NonFinite { .. } | Error::Divergence(_) => Error::Divergence(format!("{}: {e}", what())),
        other => other,
    }
}

impl<'a> GroupTrainer<'a> {
    /// Group of `cfg.group_size` students. Discriminators are created only
    /// when `disc` is given and the group has at least two students.
    pub fn new(
        dataset: &'a GraphDataset,
        student_configs: Vec<ModelConfig>,
        disc: Option<DiscriminatorConfig>,
        cfg: TrainConfig,
    ) -> Result<Self> {
        let seeds = (0..student_configs.len()).map(|m| student_seed(cfg.seed, m)).collect();
        Self::with_seeds(dataset, student_configs, seeds, disc, cfg)
    }

    pub(crate) fn with_seeds(
        dataset: &'a GraphDataset,
        student_configs: Vec<ModelConfig>,
        seeds: Vec<u64>,
        disc: Option<DiscriminatorConfig>,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if student_configs.len() != cfg.group_size {
            return Err(Error::InvalidArgument(format!(
                "{} student configurations for a group of {}",
                student_configs.len(),
                cfg.group_size
            )));
        }
        for c in &student_configs {
            c.validate()?;
            if c.num_classes() != dataset.num_classes() {
                return Err(Error::validation(
                    "model.layer_dims",
                    format!("final width {} but the dataset has {} classes", c.num_classes(), dataset.num_classes()),
                ));
            }
        }
        let train_graphs = dataset.graphs_with(Split::Train);
        for split in [Split::Train, Split::Val, Split::Test] {
            if dataset.graphs_with(split).is_empty() {
                return Err(Error::validation("masks", format!("dataset has no {} nodes", split.name())));
            }
        }
        let graphs = PreparedGraph::prepare_all(dataset)?;
        let d = dataset.num_features();
        let students = student_configs
            .into_iter()
            .zip(seeds)
            .map(|(c, s)| StudentModel::new(c, d, s))
            .collect::<Result<Vec<_>>>()?;
        let student_opts = students
            .iter()
            .map(|s| Optimizer::new(cfg.optimizer, s.parameters()))
            .collect::<Result<Vec<_>>>()?;
        let (discriminators, disc_opts) = match disc {
            Some(dc) if students.len() >= 2 => {
                let ds = students
                    .iter()
                    .enumerate()
                    .map(|(m, s)| Discriminator::new(dc.clone(), s.hidden_width(), discriminator_seed(cfg.seed, m)))
                    .collect::<Result<Vec<_>>>()?;
                let opts = ds
                    .iter()
                    .map(|d| Optimizer::new(cfg.optimizer.without_weight_decay(), d.parameters()))
                    .collect::<Result<Vec<_>>>()?;
                (ds, opts)
            }
            _ => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            dataset,
            graphs,
            train_graphs,
            cfg,
            students,
            student_opts,
            discriminators,
            disc_opts,
            guidance: Guidance::None,
            baseline: false,
        })
    }

    /// Teacher-guided single student: cross-entropy plus `alpha·T²·KL`
    /// against the teacher's softened logits on `teacher_view`.
    pub(crate) fn set_teacher(&mut self, teacher: &StudentModel, teacher_view: &GraphDataset, alpha: f64) -> Result<()> {
        let targets = self.teacher_values(teacher_view, |g| {
            let (_, z) = teacher.predict(g)?;
            softened_probs_value(&z, self.cfg.temperature, self.dataset.multi_label())
        })?;
        self.guidance = Guidance::Teacher { targets, alpha };
        self.baseline = true;
        Ok(())
    }

    /// Hint-guided single student: cross-entropy plus `weight·½·MSE`
    /// between the projected student and teacher hidden embeddings.
    pub(crate) fn set_hint(&mut self, teacher: &StudentModel, teacher_view: &GraphDataset, weight: f64, seed: u64) -> Result<()> {
        let hidden = self.teacher_values(teacher_view, |g| Ok(teacher.predict(g)?.0))?;
        let rows = self.students[0].hidden_width();
        let cols = teacher.hidden_width();
        let projection = Tensor::param(glorot(&mut seeded_rng(seed), rows, cols));
        let optimizer = Optimizer::new(self.cfg.optimizer, vec![projection.clone()])?;
        self.guidance = Guidance::Hint { hidden, projection, optimizer, weight };
        self.baseline = true;
        Ok(())
    }

    pub(crate) fn mark_baseline(&mut self) {
        self.baseline = true;
    }

    fn teacher_values(
        &self,
        view: &GraphDataset,
        f: impl Fn(&PreparedGraph) -> Result<Matrix>,
    ) -> Result<Vec<Option<Matrix>>> {
        if view.graphs().len() != self.dataset.graphs().len() {
            return Err(Error::InvalidArgument("teacher view has a different number of graphs".into()));
        }
        view.graphs()
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                if !self.train_graphs.contains(&gi) {
                    return Ok(None);
                }
                if g.num_nodes() != self.dataset.graphs()[gi].num_nodes() {
                    return Err(Error::InvalidArgument(format!("teacher view graph {gi} has a different node count")));
                }
                Ok(Some(f(&PreparedGraph::new(g)?)?))
            })
            .collect()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn students(&self) -> &[StudentModel] {
        &self.students
    }

    pub fn discriminators(&self) -> &[Discriminator] {
        &self.discriminators
    }

    pub fn prepared(&self) -> &[PreparedGraph] {
        &self.graphs
    }

    /// Indices of the graphs stepped over in every epoch, in order.
    pub fn train_graphs(&self) -> &[usize] {
        &self.train_graphs
    }

    fn stream(&self, m: usize, epoch: usize, step: usize) -> Mode {
        Mode::Train(dropout_stream(self.students[m].seed(), epoch, step))
    }

    /// One cross-entropy update of every student on graph `g`.
    pub fn warmup_step(&mut self, g: usize, epoch: usize, step: usize) -> Result<Vec<StudentLosses>> {
        (0..self.students.len())
            .map(|m| self.update_student(m, g, epoch, step, None, false))
            .collect()
    }

    /// Training-mode forward of every student: `(H, Z)` values.
    pub fn forward_all(&self, g: usize, epoch: usize, step: usize) -> Result<Vec<(Matrix, Matrix)>> {
        let graph = &self.graphs[g];
        (0..self.students.len())
            .map(|m| {
                let mut tape = Tape::new();
                let out = self.students[m]
                    .forward(&mut tape, graph, self.stream(m, epoch, step), Access::Frozen)
                    .map_err(|e| diverged(e, || format!("epoch {epoch}, student {m} forward")))?;
                Ok((tape.value(out.hidden).clone(), tape.value(out.logits).clone()))
            })
            .collect()
    }

    /// Updates every discriminator on the detached embeddings in
    /// `forwards`; students are untouched. Returns `L_D`.
    pub fn discriminator_phase(&mut self, g: usize, forwards: &[(Matrix, Matrix)]) -> Result<f64> {
        let adj = &self.graphs[g].gcn;
        let mut tape = Tape::new();
        let embeddings: Vec<Var> = forwards.iter().map(|(h, _)| tape.constant(h.clone())).collect();
        let mut pairs = Vec::with_capacity(self.discriminators.len());
        for (fake, real) in cyclic_pairs(self.discriminators.len()) {
            let d = &self.discriminators[fake];
            let f = d.logits(&mut tape, embeddings[fake], adj, Access::Trainable)?;
            let r = d.logits(&mut tape, embeddings[real], adj, Access::Trainable)?;
            pairs.push((f, r));
        }
        let loss = discriminator_loss(&mut tape, &pairs).map_err(|e| diverged(e, || "discriminator loss".into()))?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Divergence(format!("discriminator loss {value}")));
        }
        for opt in &self.disc_opts {
            opt.zero_grad();
        }
        tape.backward(loss)?;
        for opt in &mut self.disc_opts {
            opt.step()?;
        }
        Ok(value)
    }

    /// Updates every student on `CE + α·L_G share + β·L_B` with frozen
    /// discriminators. `forwards` supplies the peer outputs for the
    /// distillation targets.
    pub fn generator_phase(
        &mut self,
        g: usize,
        epoch: usize,
        step: usize,
        forwards: &[(Matrix, Matrix)],
    ) -> Result<Vec<StudentLosses>> {
        let m_count = self.students.len();
        let targets: Option<Vec<Matrix>> = if m_count >= 2 && self.cfg.weights.beta != 0.0 {
            let t = self.cfg.temperature;
            let ml = self.dataset.multi_label();
            let probs = forwards
                .iter()
                .map(|(_, z)| softened_probs_value(z, t, ml))
                .collect::<Result<Vec<_>>>()?;
            Some((0..m_count).map(|m| peer_average(&probs, m)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        let adversarial = !self.discriminators.is_empty() && self.cfg.weights.alpha != 0.0;
        (0..m_count)
            .map(|m| self.update_student(m, g, epoch, step, targets.as_ref().map(|t| &t[m]), adversarial))
            .collect()
    }

    /// One online step: discriminator phase (when there are
    /// discriminators) followed by the generator phase.
    pub fn online_step(&mut self, g: usize, epoch: usize, step: usize) -> Result<(Vec<StudentLosses>, Option<f64>)> {
        let needs_forward = self.students.len() >= 2 && (!self.discriminators.is_empty() || self.cfg.weights.beta != 0.0);
        if !needs_forward {
            return Ok((self.generator_phase(g, epoch, step, &[])?, None));
        }
        let forwards = self.forward_all(g, epoch, step)?;
        let l_d = if self.discriminators.is_empty() {
            None
        } else {
            Some(self.discriminator_phase(g, &forwards)?)
        };
        Ok((self.generator_phase(g, epoch, step, &forwards)?, l_d))
    }

    fn update_student(
        &mut self,
        m: usize,
        g: usize,
        epoch: usize,
        step: usize,
        target: Option<&Matrix>,
        adversarial: bool,
    ) -> Result<StudentLosses> {
        let ctx = || format!("epoch {epoch}, graph {g}, student {m}");
        let graph = &self.graphs[g];
        let data_graph = &self.dataset.graphs()[g];
        let mode = self.stream(m, epoch, step);
        let w = self.cfg.weights;
        let mut tape = Tape::new();
        let out = self.students[m]
            .forward(&mut tape, graph, mode, Access::Trainable)
            .map_err(|e| diverged(e, ctx))?;
        let ce = supervised_loss(&mut tape, out.logits, data_graph.labels(), data_graph.mask(Split::Train))
            .map_err(|e| diverged(e, ctx))?;
        let mut total = ce;
        let mut l_g = None;
        let mut l_b = None;
        if adversarial {
            let z = self.discriminators[m]
                .logits(&mut tape, out.hidden, &graph.gcn, Access::Frozen)
                .map_err(|e| diverged(e, ctx))?;
            let term = generator_term(&mut tape, z).map_err(|e| diverged(e, ctx))?;
            l_g = Some(tape.scalar(term));
            let s = tape.scale(term, w.alpha)?;
            total = tape.add(total, s)?;
        }
        if let Some(t) = target {
            let term = global_kd_loss_from_logits(
                &mut tape,
                out.logits,
                t,
                self.cfg.temperature,
                self.cfg.kl_order,
                self.dataset.multi_label(),
            )
            .map_err(|e| diverged(e, ctx))?;
            l_b = Some(tape.scalar(term));
            let s = tape.scale(term, w.beta)?;
            total = tape.add(total, s)?;
        }
        match &self.guidance {
            Guidance::None => {}
            Guidance::Teacher { targets, alpha } => {
                if let Some(t) = &targets[g] {
                    if *alpha != 0.0 {
                        let term = global_kd_loss_from_logits(
                            &mut tape,
                            out.logits,
                            t,
                            self.cfg.temperature,
                            crate::distill::KlOrder::TargetStudent,
                            self.dataset.multi_label(),
                        )
                        .map_err(|e| diverged(e, ctx))?;
                        l_b = Some(tape.scalar(term));
                        let s = tape.scale(term, *alpha)?;
                        total = tape.add(total, s)?;
                    }
                }
            }
            Guidance::Hint { hidden, projection, weight, .. } => {
                if let Some(h) = &hidden[g] {
                    if *weight != 0.0 {
                        let r = tape.param(projection);
                        let term = fitnet_loss(&mut tape, out.hidden, h, r).map_err(|e| diverged(e, ctx))?;
                        l_b = Some(tape.scalar(term));
                        let s = tape.scale(term, *weight)?;
                        total = tape.add(total, s)?;
                    }
                }
            }
        }
        let total_value = tape.scalar(total);
        if !total_value.is_finite() {
            return Err(Error::Divergence(format!("{}: total loss {total_value}", ctx())));
        }
        self.student_opts[m].zero_grad();
        if let Guidance::Hint { optimizer, .. } = &self.guidance {
            optimizer.zero_grad();
        }
        tape.backward(total)?;
        self.student_opts[m].step()?;
        if let Guidance::Hint { optimizer, .. } = &mut self.guidance {
            optimizer.step()?;
        }
        Ok(StudentLosses {
            ce: tape.scalar(ce),
            l_g,
            l_b,
            total: total_value,
        })
    }

    /// One epoch over every training graph, followed by evaluation.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochReport> {
        let start = Instant::now();
        let phase = if self.baseline {
            Phase::Baseline
        } else if epoch < self.cfg.epochs_warmup {
            Phase::Warmup
        } else {
            Phase::Online
        };
        let m = self.students.len();
        let mut sums = vec![StudentLosses::default(); m];
        let mut l_d_sum: Option<f64> = None;
        let steps = self.train_graphs.len();
        for step in 0..steps {
            let g = self.train_graphs[step];
            let (losses, l_d) = match phase {
                Phase::Warmup | Phase::Baseline => (self.warmup_step(g, epoch, step)?, None),
                Phase::Online => self.online_step(g, epoch, step)?,
            };
            for (acc, l) in sums.iter_mut().zip(&losses) {
                acc.ce += l.ce;
                acc.total += l.total;
                acc.l_g = l.l_g.map(|v| acc.l_g.unwrap_or(0.0) + v);
                acc.l_b = l.l_b.map(|v| acc.l_b.unwrap_or(0.0) + v);
            }
            if let Some(v) = l_d {
                l_d_sum = Some(l_d_sum.unwrap_or(0.0) + v);
            }
        }
        let n = steps as f64;
        let students = sums
            .into_iter()
            .map(|s| StudentLosses {
                ce: s.ce / n,
                l_g: s.l_g.map(|v| v / n),
                l_b: s.l_b.map(|v| v / n),
                total: s.total / n,
            })
            .collect();
        let snap = self.evaluate().map_err(|e| diverged(e, || format!("epoch {epoch} evaluation")))?;
        let report = EpochReport {
            epoch,
            phase,
            students,
            l_d: l_d_sum.map(|v| v / n),
            val: snap.val,
            test: snap.test,
            ensemble_val: snap.ensemble_val,
            ensemble_test: snap.ensemble_test,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        debug!(
            "epoch {epoch} ({}) val {:?} ensemble {:.4}",
            phase.name(),
            report.val,
            report.ensemble_val
        );
        Ok(report)
    }

    /// Validation and test metrics of every student and of the ensemble.
    pub fn evaluate(&self) -> Result<EvalSnapshot> {
        let refs: Vec<&StudentModel> = self.students.iter().collect();
        evaluate_group(&refs, self.dataset, &self.graphs)
    }

    /// Runs the whole schedule and hands back the trained models.
    pub fn train(mut self) -> Result<GroupOutcome> {
        let total = self.cfg.total_epochs();
        let mut reports = Vec::with_capacity(total);
        for epoch in 0..total {
            reports.push(self.run_epoch(epoch)?);
        }
        let snapshot = if reports.is_empty() { Some(self.evaluate()?) } else { None };
        let summary = RunSummary::from_reports(&reports, snapshot.as_ref(), self.dataset.multi_label());
        info!(
            "trained {} student(s) for {total} epochs; best student {} test {:.4}",
            self.students.len(),
            summary.best_student,
            summary.reported_test()
        );
        Ok(GroupOutcome {
            students: self.students,
            discriminators: self.discriminators,
            reports,
            summary,
        })
    }
}

/// Mean of the students' eval-mode probabilities on `graph`.
pub fn ensemble_predict(students: &[&StudentModel], graph: &PreparedGraph, multi_label: bool) -> Result<Matrix> {
    let first = students
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble of zero students".into()))?;
    let mut acc = probabilities(&first.predict(graph)?.1, multi_label);
    for s in &students[1..] {
        acc.add_assign(&probabilities(&s.predict(graph)?.1, multi_label));
    }
    if students.len() > 1 {
        acc.scale_assign(1.0 / students.len() as f64);
    }
    Ok(acc)
}

/// Metrics of one model, or of the ensemble of several, on `split`,
/// pooled over every graph containing nodes of that split.
pub fn evaluate(students: &[&StudentModel], dataset: &GraphDataset, split: Split) -> Result<Metrics> {
    let mut acc = MetricAccumulator::new();
    for gi in dataset.graphs_with(split) {
        let g = &dataset.graphs()[gi];
        let probs = ensemble_predict(students, &PreparedGraph::new(g)?, dataset.multi_label())?;
        acc.add(&probs, g.labels(), g.mask(split))?;
    }
    acc.finish()
}

fn evaluate_group(students: &[&StudentModel], dataset: &GraphDataset, graphs: &[PreparedGraph]) -> Result<EvalSnapshot> {
    let ml = dataset.multi_label();
    let m = students.len();
    let mut val = vec![MetricAccumulator::new(); m];
    let mut test = vec![MetricAccumulator::new(); m];
    let mut ens_val = MetricAccumulator::new();
    let mut ens_test = MetricAccumulator::new();
    let mut needed = dataset.graphs_with(Split::Val);
    needed.extend(dataset.graphs_with(Split::Test));
    needed.sort_unstable();
    needed.dedup();
    for gi in needed {
        let g = &dataset.graphs()[gi];
        let probs: Vec<Matrix> = students
            .iter()
            .map(|s| Ok(probabilities(&s.predict(&graphs[gi])?.1, ml)))
            .collect::<Result<_>>()?;
        let mut ens = probs[0].clone();
        for p in &probs[1..] {
            ens.add_assign(p);
        }
        if m > 1 {
            ens.scale_assign(1.0 / m as f64);
        }
        let (vm, tm) = (g.mask(Split::Val), g.mask(Split::Test));
        let has_val = vm.iter().any(|&b| b);
        let has_test = tm.iter().any(|&b| b);
        for (i, p) in probs.iter().enumerate() {
            if has_val {
                val[i].add(p, g.labels(), vm)?;
            }
            if has_test {
                test[i].add(p, g.labels(), tm)?;
            }
        }
        if has_val {
            ens_val.add(&ens, g.labels(), vm)?;
        }
        if has_test {
            ens_test.add(&ens, g.labels(), tm)?;
        }
    }
    let primary = |a: &MetricAccumulator| a.finish().map(|x| x.primary(ml));
    Ok(EvalSnapshot {
        val: val.iter().map(primary).collect::<Result<_>>()?,
        test: test.iter().map(primary).collect::<Result<_>>()?,
        ensemble_val: primary(&ens_val)?,
        ensemble_test: primary(&ens_test)?,
    })
}
