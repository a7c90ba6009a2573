use super::config::{projection_seed, student_seed, teacher_seed, TrainConfig};
use super::group::{GroupOutcome, GroupTrainer};
use crate::distill::LossWeights;
use crate::error::{Error, Result};
use crate::graph::GraphDataset;
use crate::models::{DiscriminatorConfig, ModelConfig, StudentModel};

/// Online adversarial distillation of `student_configs.len()` students.
/// With two or more students one discriminator per student is trained
/// (pass `None` to train without them).
pub fn train_oad(
    dataset: &GraphDataset,
    student_configs: Vec<ModelConfig>,
    disc: Option<DiscriminatorConfig>,
    cfg: TrainConfig,
) -> Result<GroupOutcome> {
    let cfg = TrainConfig {
        group_size: student_configs.len(),
        ..cfg
    };
    GroupTrainer::new(dataset, student_configs, disc, cfg)?.train()
}

/// Mutual learning: the same schedule with the adversarial term removed
/// and no discriminators.
pub fn train_dml(dataset: &GraphDataset, student_configs: Vec<ModelConfig>, cfg: TrainConfig) -> Result<GroupOutcome> {
    let cfg = TrainConfig {
        weights: LossWeights {
            alpha: 0.0,
            ..cfg.weights
        },
        ..cfg
    };
    train_oad(dataset, student_configs, None, cfg)
}

fn single_config(cfg: TrainConfig) -> TrainConfig {
    TrainConfig {
        group_size: 1,
        epochs_warmup: cfg.total_epochs(),
        epochs_online: 0,
        ..cfg
    }
}

fn single_trainer(dataset: &GraphDataset, config: ModelConfig, seed: u64, cfg: TrainConfig) -> Result<GroupTrainer<'_>> {
    let mut t = GroupTrainer::with_seeds(dataset, vec![config], vec![seed], None, single_config(cfg))?;
    t.mark_baseline();
    Ok(t)
}

/// One student trained with cross-entropy alone for the full epoch budget.
pub fn train_single(dataset: &GraphDataset, config: ModelConfig, cfg: TrainConfig) -> Result<GroupOutcome> {
    single_trainer(dataset, config, student_seed(cfg.seed, 0), cfg)?.train()
}

/// Teacher trained with cross-entropy alone. Its parameters stay fixed
/// once this returns.
pub fn pretrain_teacher(dataset: &GraphDataset, config: ModelConfig, cfg: TrainConfig) -> Result<GroupOutcome> {
    single_trainer(dataset, config, teacher_seed(cfg.seed), cfg)?.train()
}

fn check_teacher(teacher: &StudentModel, dataset: &GraphDataset) -> Result<()> {
    if teacher.input_dim() != dataset.num_features() || teacher.num_classes() != dataset.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "teacher maps {} features to {} classes, dataset has {} and {}",
            teacher.input_dim(),
            teacher.num_classes(),
            dataset.num_features(),
            dataset.num_classes()
        )));
    }
    Ok(())
}

/// Knowledge distillation from a frozen teacher: cross-entropy plus
/// `alpha · T² · KL` against the teacher's softened outputs.
///
/// The teacher is evaluated on `teacher_view`, which must have the same
/// graphs and nodes as `dataset`; passing the unperturbed dataset lets a
/// student trained on perturbed inputs learn from clean teacher outputs.
pub fn train_kd(
    dataset: &GraphDataset,
    teacher: &StudentModel,
    teacher_view: &GraphDataset,
    student_config: ModelConfig,
    cfg: TrainConfig,
    alpha: f64,
) -> Result<GroupOutcome> {
    check_teacher(teacher, teacher_view)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::validation("alpha", format!("{alpha} must be non-negative")));
    }
    let mut t = single_trainer(dataset, student_config, student_seed(cfg.seed, 0), cfg)?;
    t.set_teacher(teacher, teacher_view, alpha)?;
    t.train()
}

/// Hint training: cross-entropy plus `weight · ½ · mean((H_s R − H_t)²)`
/// with a learned projection `R` from the student to the teacher hidden
/// width.
pub fn train_fitnet(
    dataset: &GraphDataset,
    teacher: &StudentModel,
    teacher_view: &GraphDataset,
    student_config: ModelConfig,
    cfg: TrainConfig,
    weight: f64,
) -> Result<GroupOutcome> {
    check_teacher(teacher, teacher_view)?;
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::validation("hint_weight", format!("{weight} must be non-negative")));
    }
    let mut t = single_trainer(dataset, student_config, student_seed(cfg.seed, 0), cfg)?;
    t.set_hint(teacher, teacher_view, weight, projection_seed(cfg.seed))?;
    t.train()
}
