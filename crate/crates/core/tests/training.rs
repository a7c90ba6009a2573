use oad_core::distill::LossWeights;
use oad_core::graph::synthetic::{CitationLike, ProteinLike};
use oad_core::graph::GraphDataset;
use oad_core::models::{Discriminator, DiscriminatorConfig, ModelConfig, StudentModel};
use oad_core::train::{
    pretrain_teacher, train_dml, train_fitnet, train_kd, train_oad, train_single, EpochReport, GroupOutcome,
    GroupTrainer, Phase, TrainConfig,
};
use oad_core::Error;

fn citation() -> GraphDataset {
    CitationLike::small(3).generate().unwrap()
}

fn cfg(warmup: usize, online: usize) -> TrainConfig {
    TrainConfig {
        epochs_warmup: warmup,
        epochs_online: online,
        group_size: 3,
        ..TrainConfig::citation(11)
    }
}

fn students(m: usize) -> Vec<ModelConfig> {
    vec![ModelConfig::gcn(vec![8, 3]); m]
}

fn disc() -> Option<DiscriminatorConfig> {
    Some(DiscriminatorConfig::new(vec![4, 1]))
}

fn params(models: &[StudentModel]) -> Vec<Vec<f64>> {
    models.iter().flat_map(|s| s.parameters()).map(|p| p.value().data().to_vec()).collect()
}

fn disc_params(models: &[Discriminator]) -> Vec<Vec<f64>> {
    models.iter().flat_map(|d| d.parameters()).map(|p| p.value().data().to_vec()).collect()
}

fn strip_timing(reports: &[EpochReport]) -> Vec<EpochReport> {
    reports.iter().cloned().map(|r| EpochReport { elapsed_ms: 0.0, ..r }).collect()
}

fn with_weights(c: TrainConfig, alpha: f64, beta: f64) -> TrainConfig {
    TrainConfig {
        weights: LossWeights { alpha, beta },
        ..c
    }
}

#[test]
fn dml_matches_oad_without_adversarial_term() {
    let ds = citation();
    let c = cfg(2, 3);
    let dml = train_dml(&ds, students(3), c).unwrap();
    let oad = train_oad(&ds, students(3), disc(), with_weights(c, 0.0, 1.0)).unwrap();
    assert!(dml.discriminators.is_empty());
    assert_eq!(oad.discriminators.len(), 3);
    assert_eq!(params(&dml.students), params(&oad.students));
    assert_eq!(dml.summary, oad.summary);
}

#[test]
fn single_student_oad_matches_plain_training() {
    let ds = citation();
    let c = cfg(2, 3);
    let oad = train_oad(&ds, students(1), disc(), c).unwrap();
    let single = train_single(&ds, students(1).remove(0), c).unwrap();
    assert!(oad.discriminators.is_empty());
    assert_eq!(params(&oad.students), params(&single.students));
    assert_eq!(oad.summary.reported_test(), single.summary.reported_test());
    assert!(oad.reports.iter().all(|r| r.l_d.is_none() && r.students[0].l_g.is_none()));
}

#[test]
fn zero_weights_reduce_to_warmup() {
    let ds = citation();
    let online = train_oad(&ds, students(3), disc(), with_weights(cfg(2, 3), 0.0, 0.0)).unwrap();
    let warm = train_oad(&ds, students(3), disc(), cfg(5, 0)).unwrap();
    assert_eq!(params(&online.students), params(&warm.students));
    let last = online.reports.last().unwrap();
    assert_eq!(last.phase, Phase::Online);
    assert!(last.students.iter().all(|s| s.l_g.is_none() && s.l_b.is_none()));
    assert!(last.l_d.is_some());
}

#[test]
fn runs_are_deterministic() {
    let ds = citation();
    let a = train_oad(&ds, students(3), disc(), cfg(1, 2)).unwrap();
    let b = train_oad(&ds, students(3), disc(), cfg(1, 2)).unwrap();
    assert_eq!(params(&a.students), params(&b.students));
    assert_eq!(disc_params(&a.discriminators), disc_params(&b.discriminators));
    assert_eq!(strip_timing(&a.reports), strip_timing(&b.reports));
}

#[test]
fn seed_changes_the_outcome() {
    let ds = citation();
    let a = train_oad(&ds, students(2), disc(), cfg(1, 1)).unwrap();
    let b = train_oad(&ds, students(2), disc(), TrainConfig { seed: 12, ..cfg(1, 1) }).unwrap();
    assert_ne!(params(&a.students), params(&b.students));
}

#[test]
fn phases_only_touch_their_own_models() {
    let ds = citation();
    let mut t = GroupTrainer::new(&ds, students(3), disc(), cfg(0, 1)).unwrap();
    let g = t.train_graphs()[0];
    let s0 = params(t.students());
    let d0 = disc_params(t.discriminators());

    let fwd = t.forward_all(g, 0, 0).unwrap();
    let l_d = t.discriminator_phase(g, &fwd).unwrap();
    assert!(l_d.is_finite());
    assert_eq!(params(t.students()), s0);
    let d1 = disc_params(t.discriminators());
    assert_ne!(d1, d0);

    // the recomputed forward replays the same dropout masks
    let again = t.forward_all(g, 0, 0).unwrap();
    assert_eq!(again, fwd);

    let losses = t.generator_phase(g, 0, 0, &fwd).unwrap();
    assert_eq!(disc_params(t.discriminators()), d1);
    assert_ne!(params(t.students()), s0);
    for l in &losses {
        assert!(l.l_g.is_some() && l.l_b.is_some());
        assert!(l.l_b.unwrap() >= 0.0);
        let expect = l.ce + l.l_g.unwrap() + l.l_b.unwrap();
        assert!((l.total - expect).abs() < 1e-12);
    }
}

#[test]
fn discriminator_loss_starts_near_zero_and_adversarial_cycle_is_per_student() {
    let ds = citation();
    let out = train_oad(&ds, students(4), disc(), cfg(0, 1)).unwrap();
    let r = &out.reports[0];
    assert_eq!(r.students.len(), 4);
    // at initialisation both embeddings look alike to every discriminator
    assert!(r.l_d.unwrap().abs() < 1.0, "{:?}", r.l_d);
}

fn teacher(ds: &GraphDataset) -> StudentModel {
    pretrain_teacher(ds, ModelConfig::gcn(vec![16, 3]), cfg(4, 0)).unwrap().students.remove(0)
}

#[test]
fn teacher_stays_frozen_during_distillation() {
    let ds = citation();
    let t = teacher(&ds);
    let before = params(std::slice::from_ref(&t));
    let kd = train_kd(&ds, &t, &ds, students(1).remove(0), cfg(2, 1), 1.0).unwrap();
    let fit = train_fitnet(&ds, &t, &ds, students(1).remove(0), cfg(2, 1), 1.0).unwrap();
    assert_eq!(params(std::slice::from_ref(&t)), before);
    assert!(kd.reports.iter().all(|r| r.phase == Phase::Baseline && r.students[0].l_b.is_some()));
    assert!(fit.reports.iter().all(|r| r.students[0].l_b.unwrap() >= 0.0));
}

#[test]
fn zero_weighted_guidance_matches_plain_training() {
    let ds = citation();
    let t = teacher(&ds);
    let c = cfg(2, 1);
    let single = train_single(&ds, students(1).remove(0), c).unwrap();
    let kd = train_kd(&ds, &t, &ds, students(1).remove(0), c, 0.0).unwrap();
    let fit = train_fitnet(&ds, &t, &ds, students(1).remove(0), c, 0.0).unwrap();
    assert_eq!(params(&kd.students), params(&single.students));
    assert_eq!(params(&fit.students), params(&single.students));
}

#[test]
fn mismatched_teacher_is_rejected() {
    let ds = citation();
    let other = StudentModel::new(ModelConfig::gcn(vec![4, 3]), 7, 0).unwrap();
    assert!(train_kd(&ds, &other, &ds, students(1).remove(0), cfg(1, 0), 1.0).is_err());
}

#[test]
fn plain_training_learns_the_synthetic_task() {
    let ds = citation();
    let out = train_single(&ds, ModelConfig::gcn(vec![16, 3]), cfg(60, 0)).unwrap();
    let first = &out.reports[0];
    assert!(out.reports.last().unwrap().students[0].ce < first.students[0].ce);
    assert!(out.summary.reported_test() > 0.6, "{:?}", out.summary);
}

#[test]
fn summary_follows_best_validation_epoch() {
    let ds = citation();
    let out = train_oad(&ds, students(3), disc(), cfg(3, 3)).unwrap();
    let s = &out.summary;
    for (m, b) in s.students.iter().enumerate() {
        let best = out.reports.iter().map(|r| r.val[m]).fold(f64::MIN, f64::max);
        assert_eq!(b.val, best);
        let r = &out.reports[b.epoch];
        assert_eq!((r.val[m], r.test[m]), (b.val, b.test));
        // earliest epoch wins ties
        assert!(out.reports[..b.epoch].iter().all(|r| r.val[m] < best));
    }
    let vals: Vec<f64> = s.students.iter().map(|b| b.val).collect();
    let top = vals.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(s.best_student, vals.iter().position(|&v| v == top).unwrap());
    assert_eq!(s.final_val, out.reports.last().unwrap().val);
}

#[test]
fn zero_epochs_still_evaluate() {
    let ds = citation();
    let out: GroupOutcome = train_oad(&ds, students(2), disc(), cfg(0, 0)).unwrap();
    assert!(out.reports.is_empty());
    assert_eq!(out.summary.students.len(), 2);
    assert!(out.summary.final_val.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn inductive_multi_label_training() {
    let ds = ProteinLike::small(5).generate().unwrap();
    let k = ds.num_classes();
    let c = TrainConfig {
        epochs_warmup: 1,
        epochs_online: 2,
        group_size: 2,
        ..TrainConfig::ppi(2)
    };
    let mut t = GroupTrainer::new(&ds, vec![ModelConfig::gcn(vec![8, k]); 2], disc(), c).unwrap();
    assert_eq!(t.train_graphs().len(), 4);
    let r = t.run_epoch(1).unwrap();
    assert!(r.students.iter().all(|s| s.total.is_finite() && s.l_b.unwrap() >= 0.0));
    assert!(r.val.iter().all(|v| (0.0..=1.0).contains(v)));
    let out = train_oad(&ds, vec![ModelConfig::gat(vec![4, k], vec![2, 1]); 2], disc(), c).unwrap();
    assert!(out.summary.multi_label);
}

#[test]
fn group_size_must_match_configs() {
    let ds = citation();
    let e = GroupTrainer::new(&ds, students(2), disc(), cfg(1, 1)).err().unwrap();
    assert!(matches!(e, Error::InvalidArgument(_)));
    let e = GroupTrainer::new(&ds, vec![ModelConfig::gcn(vec![8, 5]); 3], disc(), cfg(1, 1)).err().unwrap();
    assert!(e.to_string().contains("classes"));
}

#[test]
fn divergence_is_reported() {
    let ds = citation();
    let mut c = cfg(3, 0);
    c.optimizer.lr = 1e300;
    let e = train_single(&ds, ModelConfig::gcn(vec![8, 3]), c).unwrap_err();
    assert!(matches!(e, Error::Divergence(_)), "{e}");
}
