//! Loss functions: supervised cross-entropy, softened-logit distillation
//! against peers or a teacher, the cyclic adversarial losses on hidden
//! embeddings, and the FitNet hint loss.
//!
//! Every log is taken of a probability clamped below at [`LOG_CLAMP`], or
//! computed directly from logits through log-softmax / log-sigmoid.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::matrix::Matrix;

pub const LOG_CLAMP: f64 = 1e-12;
pub const DEFAULT_TEMPERATURE: f64 = 3.0;

/// Argument order of the distillation KL divergence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlOrder {
    /// `KL(target ‖ student)`, the usual distillation direction.
    #[default]
    TargetStudent,
    /// `KL(student ‖ target)`.
    StudentTarget,
}

impl std::str::FromStr for KlOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_student" => Ok(Self::TargetStudent),
            "student_target" => Ok(Self::StudentTarget),
            other => Err(Error::InvalidArgument(format!("unknown KL order {other:?}"))),
        }
    }
}

impl KlOrder {
    pub fn name(self) -> &'static str {
        match self {
            KlOrder::TargetStudent => "target_student",
            KlOrder::StudentTarget => "student_target",
        }
    }
}

/// Weights of the adversarial (`alpha`) and logit distillation (`beta`)
/// terms in the total student loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(name, format!("{v} is not a finite non-negative weight")));
            }
        }
        Ok(())
    }
}

pub fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("temperature {t} must be positive")))
    }
}

/// Row-wise `softmax(Z / T)` on the tape.
pub fn softened_probs(tape: &mut Tape, z: Var, t: f64) -> Result<Var> {
    check_temperature(t)?;
    let u = tape.scale(z, 1.0 / t)?;
    tape.softmax_rows(u)
}

/// Softened probabilities as plain values: row softmax of `Z / T`, or the
/// per-class sigmoid of `Z / T` for multi-label outputs.
pub fn softened_probs_value(z: &Matrix, t: f64, multi_label: bool) -> Result<Matrix> {
    check_temperature(t)?;
    if multi_label {
        return Ok(z.map(|x| sigmoid(x / t)));
    }
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let row = z.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x / t));
        let dst = out.row_mut(i);
        let mut s = 0.0;
        for (d, &x) in dst.iter_mut().zip(row) {
            *d = (x / t - max).exp();
            s += *d;
        }
        dst.iter_mut().for_each(|d| *d /= s);
    }
    Ok(out)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean of every peer's probabilities except student `m`'s. The result is
/// a plain value, so no gradient reaches the peers.
pub fn peer_average(probs: &[Matrix], m: usize) -> Result<Matrix> {
    if probs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "peer average needs at least two students, got {}",
            probs.len()
        )));
    }
    if m >= probs.len() {
        return Err(Error::InvalidArgument(format!("student {m} out of range")));
    }
    let (r, c) = probs[0].shape();
    let mut acc = Matrix::zeros(r, c);
    for (j, p) in probs.iter().enumerate() {
        if p.shape() != (r, c) {
            return Err(Error::shape("peer_average", format!("{r}x{c}"), format!("{:?}", p.shape())));
        }
        if j != m {
            acc.add_assign(p);
        }
    }
    acc.scale_assign(1.0 / (probs.len() - 1) as f64);
    Ok(acc)
}

fn clamped_ln(x: f64) -> f64 {
    x.max(LOG_CLAMP).ln()
}

/// `Σ target·ln(target)` over all entries, divided by the row count (the
/// constant half of `KL(target ‖ ·)`).
fn neg_entropy_per_row(target: &Matrix) -> f64 {
    let s: f64 = target
        .data()
        .iter()
        .map(|&q| if q > 0.0 { q * clamped_ln(q) } else { 0.0 })
        .sum();
    s / target.rows() as f64
}

/// Categorical KL per node, averaged over nodes. `p` and `log_p` are the
/// student's probabilities and their (clamped) logs.
fn categorical_kl(tape: &mut Tape, p: Var, log_p: Var, target: &Matrix, order: KlOrder) -> Result<Var> {
    let n = target.rows() as f64;
    match order {
        KlOrder::TargetStudent => {
            let cross = tape.mul_const(log_p, Arc::new(target.clone()))?;
            let cross = tape.sum(cross)?;
            let cross = tape.scale(cross, -1.0 / n)?;
            tape.add_scalar(cross, neg_entropy_per_row(target))
        }
        KlOrder::StudentTarget => {
            let log_q = tape.constant(target.map(clamped_ln));
            let diff = tape.sub(log_p, log_q)?;
            let prod = tape.mul(p, diff)?;
            let s = tape.sum(prod)?;
            tape.scale(s, 1.0 / n)
        }
    }
}

fn check_target(tape: &Tape, v: Var, target: &Matrix, op: &'static str) -> Result<()> {
    let shape = tape.value(v).shape();
    if shape != target.shape() {
        return Err(Error::shape(op, format!("{:?}", target.shape()), format!("{shape:?}")));
    }
    if target.rows() == 0 {
        return Err(Error::InvalidArgument(format!("{op}: no nodes")));
    }
    Ok(())
}

/// `T² · mean_i KL(ẑ_i ‖ z_i)` for row-stochastic student probabilities
/// `z` and a fixed target `ẑ` (the order flips with `order`).
pub fn global_kd_loss(tape: &mut Tape, z: Var, z_hat: &Matrix, t: f64, order: KlOrder) -> Result<Var> {
    check_temperature(t)?;
    check_target(tape, z, z_hat, "global_kd_loss")?;
    let zc = tape.clamp_min(z, LOG_CLAMP)?;
    let log_z = tape.log(zc)?;
    let kl = categorical_kl(tape, z, log_z, z_hat, order)?;
    tape.scale(kl, t * t)
}

/// [`global_kd_loss`] computed from raw student logits. Single-label
/// outputs are softened with a row softmax of `Z/T`; multi-label outputs
/// are treated as independent Bernoulli variables `sigmoid(Z/T)`, with the
/// KL summed over classes and averaged over nodes.
pub fn global_kd_loss_from_logits(
    tape: &mut Tape,
    logits: Var,
    target: &Matrix,
    t: f64,
    order: KlOrder,
    multi_label: bool,
) -> Result<Var> {
    check_temperature(t)?;
    check_target(tape, logits, target, "global_kd_loss")?;
    let u = tape.scale(logits, 1.0 / t)?;
    let kl = if multi_label {
        bernoulli_kl(tape, u, target, order)?
    } else {
        let log_p = tape.log_softmax_rows(u)?;
        let log_p = tape.clamp_min(log_p, LOG_CLAMP.ln())?;
        let p = match order {
            KlOrder::TargetStudent => log_p,
            KlOrder::StudentTarget => tape.softmax_rows(u)?,
        };
        categorical_kl(tape, p, log_p, target, order)?
    };
    tape.scale(kl, t * t)
}

fn bernoulli_kl(tape: &mut Tape, u: Var, q: &Matrix, order: KlOrder) -> Result<Var> {
    let n = q.rows() as f64;
    let floor = LOG_CLAMP.ln();
    let lp = tape.log_sigmoid(u)?;
    let lp = tape.clamp_min(lp, floor)?;
    let neg_u = tape.scale(u, -1.0)?;
    let lnp = tape.log_sigmoid(neg_u)?;
    let lnp = tape.clamp_min(lnp, floor)?;
    match order {
        KlOrder::TargetStudent => {
            let a = tape.mul_const(lp, Arc::new(q.clone()))?;
            let b = tape.mul_const(lnp, Arc::new(q.map(|x| 1.0 - x)))?;
            let cross = tape.add(a, b)?;
            let cross = tape.sum(cross)?;
            let cross = tape.scale(cross, -1.0 / n)?;
            let c: f64 = q
                .data()
                .iter()
                .map(|&x| {
                    let pos = if x > 0.0 { x * clamped_ln(x) } else { 0.0 };
                    let neg = if x < 1.0 { (1.0 - x) * clamped_ln(1.0 - x) } else { 0.0 };
                    pos + neg
                })
                .sum::<f64>()
                / n;
            tape.add_scalar(cross, c)
        }
        KlOrder::StudentTarget => {
            let p = tape.sigmoid(u)?;
            let np = tape.sigmoid(neg_u)?;
            let lq = tape.constant(q.map(clamped_ln));
            let lnq = tape.constant(q.map(|x| clamped_ln(1.0 - x)));
            let d1 = tape.sub(lp, lq)?;
            let d2 = tape.sub(lnp, lnq)?;
            let a = tape.mul(p, d1)?;
            let b = tape.mul(np, d2)?;
            let s = tape.add(a, b)?;
            let s = tape.sum(s)?;
            tape.scale(s, 1.0 / n)
        }
    }
}

/// Zero-based `(fake, real)` index pairs of the adversarial cycle:
/// discriminator `m` treats student `m`'s embedding as fake and student
/// `(m+1) mod M`'s as real. Empty for `M < 2`.
pub fn cyclic_pairs(m: usize) -> Vec<(usize, usize)> {
    if m < 2 {
        return Vec::new();
    }
    (0..m).map(|i| (i, (i + 1) % m)).collect()
}

/// `Σ_pairs [mean log σ(fake) − mean log σ(real)]` over discriminator
/// logits. Callers pass logits computed from detached embeddings.
pub fn discriminator_loss(tape: &mut Tape, pairs: &[(Var, Var)]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &(fake, real) in pairs {
        let (nf, nr) = (tape.value(fake).rows(), tape.value(real).rows());
        if nf != nr {
            return Err(Error::shape("discriminator_loss", nf, nr));
        }
        let lf = tape.log_sigmoid(fake)?;
        let lf = tape.mean(lf)?;
        let lr = tape.log_sigmoid(real)?;
        let lr = tape.mean(lr)?;
        let term = tape.sub(lf, lr)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("discriminator_loss needs at least one pair".into()))
}

/// `Σ_m mean −log σ(D^m(H_m))` over each student's own discriminator
/// logits.
pub fn generator_loss(tape: &mut Tape, own: &[Var]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &z in own {
        let term = generator_term(tape, z)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("generator_loss needs at least one student".into()))
}

/// One student's share of [`generator_loss`].
pub fn generator_term(tape: &mut Tape, own: Var) -> Result<Var> {
    let l = tape.log_sigmoid(own)?;
    let m = tape.mean(l)?;
    tape.scale(m, -1.0)
}

/// Cross-entropy over the nodes selected by `mask`: softmax cross-entropy
/// for single-label data, mean binary cross-entropy over nodes and classes
/// for multi-label data.
pub fn supervised_loss(tape: &mut Tape, z: Var, labels: &Labels, mask: &[bool]) -> Result<Var> {
    let (n, k) = tape.value(z).shape();
    if mask.len() != n || labels.len() != n {
        return Err(Error::shape("supervised_loss", n, format!("{} mask, {} labels", mask.len(), labels.len())));
    }
    let rows: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect();
    if rows.is_empty() {
        return Err(Error::InvalidArgument("supervised_loss: empty mask".into()));
    }
    match labels {
        Labels::Single(y) => {
            let mut picks = Vec::with_capacity(rows.len());
            for &i in &rows {
                if y[i] >= k {
                    return Err(Error::InvalidArgument(format!("label {} of node {i} outside [0, {k})", y[i])));
                }
                picks.push((i, y[i]));
            }
            let lp = tape.log_softmax_rows(z)?;
            let m = tape.pick_mean(lp, picks)?;
            tape.scale(m, -1.0)
        }
        Labels::Multi(y) => tape.bce_with_logits(z, Arc::new(y.clone()), rows),
    }
}

/// `ce + α·l_g + β·l_b`. A term whose weight is zero, or which is absent,
/// is left off the tape entirely.
pub fn total_loss(tape: &mut Tape, ce: Var, l_g: Option<Var>, l_b: Option<Var>, w: LossWeights) -> Result<Var> {
    let mut total = ce;
    for (term, weight) in [(l_g, w.alpha), (l_b, w.beta)] {
        if let Some(v) = term {
            if weight != 0.0 {
                let s = tape.scale(v, weight)?;
                total = tape.add(total, s)?;
            }
        }
    }
    Ok(total)
}

/// Same arithmetic as [`total_loss`] on plain numbers.
pub fn total_loss_value(ce: f64, l_g: f64, l_b: f64, w: LossWeights) -> f64 {
    let mut t = ce;
    if w.alpha != 0.0 {
        t += w.alpha * l_g;
    }
    if w.beta != 0.0 {
        t += w.beta * l_b;
    }
    t
}

/// Classic teacher-student loss: `CE + α·T²·mean_i KL(p_t ‖ p_s)` with the
/// teacher's softened outputs as a fixed target. The KL covers every row
/// of the logits; the cross-entropy only the `mask` rows.
#[allow(clippy::too_many_arguments)]
pub fn vanilla_kd_loss(
    tape: &mut Tape,
    student_logits: Var,
    teacher_logits: &Matrix,
    labels: &Labels,
    mask: &[bool],
    t: f64,
    alpha: f64,
    multi_label: bool,
) -> Result<Var> {
    let ce = supervised_loss(tape, student_logits, labels, mask)?;
    if alpha == 0.0 {
        return Ok(ce);
    }
    let target = softened_probs_value(teacher_logits, t, multi_label)?;
    let kd = global_kd_loss_from_logits(tape, student_logits, &target, t, KlOrder::TargetStudent, multi_label)?;
    let kd = tape.scale(kd, alpha)?;
    tape.add(ce, kd)
}

/// `½ · mean((h_s·R − h_t)²)` over all entries, with `R` a learned linear
/// projection and `h_t` a fixed teacher embedding.
pub fn fitnet_loss(tape: &mut Tape, h_student: Var, h_teacher: &Matrix, projection: Var) -> Result<Var> {
    let r = tape.matmul(h_student, projection)?;
    check_target(tape, r, h_teacher, "fitnet_loss")?;
    let t = tape.constant(h_teacher.clone());
    let d = tape.sub(r, t)?;
    let sq = tape.mul(d, d)?;
    let m = tape.mean(sq)?;
    tape.scale(m, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softening_examples() {
        let z = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let p = softened_probs_value(&z, 3.0, false).unwrap();
        assert!(close(p.get(0, 0), 0.5826, 1e-4) && close(p.get(0, 1), 0.4174, 1e-4));

        let z = Matrix::from_rows(&[[3.0, -3.0]]).unwrap();
        let p = softened_probs_value(&z, 1e6, false).unwrap();
        assert!(close(p.get(0, 0), 0.5, 1e-5));

        let mut tape = Tape::new();
        let v = tape.constant(Matrix::from_rows(&[[0.3, -1.2, 2.0]]).unwrap());
        let a = softened_probs(&mut tape, v, 1.0).unwrap();
        let b = tape.softmax_rows(v).unwrap();
        assert_eq!(tape.value(a), tape.value(b));
        assert!(softened_probs(&mut tape, v, 0.0).is_err());
    }

    #[test]
    fn peer_average_cases() {
        let a = Matrix::from_rows(&[[0.2, 0.8]]).unwrap();
        let b = Matrix::from_rows(&[[0.6, 0.4]]).unwrap();
        assert_eq!(peer_average(&[a.clone(), b.clone()], 0).unwrap(), b);
        assert_eq!(peer_average(&[a.clone(), b.clone(), b.clone()], 0).unwrap(), b);
        assert!(peer_average(&[a], 0).is_err());
    }

    #[test]
    fn kl_hand_example() {
        let mut tape = Tape::new();
        let z = tape.constant(Matrix::from_rows(&[[0.5, 0.5]]).unwrap());
        let target = Matrix::from_rows(&[[0.75, 0.25]]).unwrap();
        let l = global_kd_loss(&mut tape, z, &target, 1.0, KlOrder::TargetStudent).unwrap();
        let expect = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!(close(tape.scalar(l), expect, 1e-12));
        assert!(close(tape.scalar(l), 0.13081, 1e-4));
    }

    #[test]
    fn kl_zero_on_equal_and_scales_with_t_squared() {
        let p = Matrix::from_rows(&[[0.1, 0.6, 0.3], [0.25, 0.25, 0.5]]).unwrap();
        let q = Matrix::from_rows(&[[0.2, 0.5, 0.3], [0.4, 0.4, 0.2]]).unwrap();
        let mut tape = Tape::new();
        let zp = tape.constant(p.clone());
        for order in [KlOrder::TargetStudent, KlOrder::StudentTarget] {
            let same = global_kd_loss(&mut tape, zp, &p, 3.0, order).unwrap();
            assert!(tape.scalar(same).abs() < 1e-15);
            let l1 = global_kd_loss(&mut tape, zp, &q, 1.5, order).unwrap();
            let l2 = global_kd_loss(&mut tape, zp, &q, 3.0, order).unwrap();
            assert!(tape.scalar(l1) > 0.0);
            assert!(close(tape.scalar(l2), 4.0 * tape.scalar(l1), 1e-12));
        }
    }

    #[test]
    fn logits_form_matches_probability_form() {
        let z = Matrix::from_rows(&[[1.0, -0.5, 2.0], [0.0, 0.3, -1.0]]).unwrap();
        let target = Matrix::from_rows(&[[0.2, 0.5, 0.3], [0.4, 0.4, 0.2]]).unwrap();
        for order in [KlOrder::TargetStudent, KlOrder::StudentTarget] {
            let mut tape = Tape::new();
            let v = tape.constant(z.clone());
            let a = global_kd_loss_from_logits(&mut tape, v, &target, 3.0, order, false).unwrap();
            let p = softened_probs(&mut tape, v, 3.0).unwrap();
            let b = global_kd_loss(&mut tape, p, &target, 3.0, order).unwrap();
            assert!(close(tape.scalar(a), tape.scalar(b), 1e-12));
        }
    }

    #[test]
    fn bernoulli_kl_is_zero_on_own_target_and_positive_otherwise() {
        let z = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let own = softened_probs_value(&z, 3.0, true).unwrap();
        let other = Matrix::from_rows(&[[0.9, 0.5, 0.1]]).unwrap();
        for order in [KlOrder::TargetStudent, KlOrder::StudentTarget] {
            let mut tape = Tape::new();
            let v = tape.constant(z.clone());
            let same = global_kd_loss_from_logits(&mut tape, v, &own, 3.0, order, true).unwrap();
            assert!(tape.scalar(same).abs() < 1e-12);
            let diff = global_kd_loss_from_logits(&mut tape, v, &other, 3.0, order, true).unwrap();
            assert!(tape.scalar(diff) > 0.0);
        }
    }

    #[test]
    fn cycle_pairs() {
        assert_eq!(cyclic_pairs(4), vec![(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert_eq!(cyclic_pairs(2), vec![(0, 1), (1, 0)]);
        assert!(cyclic_pairs(1).is_empty());
    }

    #[test]
    fn adversarial_examples() {
        let mut tape = Tape::new();
        let zero = tape.constant(Matrix::zeros(5, 1));
        let d = discriminator_loss(&mut tape, &[(zero, zero)]).unwrap();
        assert_eq!(tape.scalar(d), 0.0);

        let logit = |p: f64| (p / (1.0 - p)).ln();
        let fake = tape.constant(Matrix::filled(5, 1, logit(0.1)));
        let real = tape.constant(Matrix::filled(5, 1, logit(0.9)));
        let d = discriminator_loss(&mut tape, &[(fake, real)]).unwrap();
        assert!(close(tape.scalar(d), 0.1f64.ln() - 0.9f64.ln(), 1e-12));
        assert!(close(tape.scalar(d), -2.1972, 1e-4));

        let g = generator_loss(&mut tape, &[zero; 4]).unwrap();
        assert!(close(tape.scalar(g), 4.0 * 2f64.ln(), 1e-12));
        let big = tape.constant(Matrix::filled(3, 1, 40.0));
        let g = generator_loss(&mut tape, &[big]).unwrap();
        assert!(tape.scalar(g) >= 0.0 && tape.scalar(g) < 1e-15);
    }

    #[test]
    fn supervised_examples() {
        let mut tape = Tape::new();
        let z = tape.constant(Matrix::zeros(3, 7));
        let l = supervised_loss(&mut tape, z, &Labels::Single(vec![0, 3, 6]), &[true, true, true]).unwrap();
        assert!(close(tape.scalar(l), 7f64.ln(), 1e-12));

        let z2 = tape.constant(Matrix::zeros(2, 4));
        let y = Labels::Multi(Matrix::from_rows(&[[1.0, 0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 1.0]]).unwrap());
        let l = supervised_loss(&mut tape, z2, &y, &[true, true]).unwrap();
        assert!(close(tape.scalar(l), 2f64.ln(), 1e-12));

        let sharp = tape.constant(Matrix::from_rows(&[[200.0, 0.0], [0.0, 200.0]]).unwrap());
        let l = supervised_loss(&mut tape, sharp, &Labels::Single(vec![0, 1]), &[true, true]).unwrap();
        assert!(tape.scalar(l) < 1e-80);

        assert!(supervised_loss(&mut tape, z, &Labels::Single(vec![0, 0, 0]), &[false; 3]).is_err());
        assert!(supervised_loss(&mut tape, z, &Labels::Single(vec![0, 9, 0]), &[true; 3]).is_err());
    }

    #[test]
    fn total_loss_arithmetic() {
        let w = LossWeights::new(1.0, 1.0).unwrap();
        assert_eq!(total_loss_value(1.0, 2.0, 3.0, w), 6.0);
        let mut tape = Tape::new();
        let ce = tape.constant(Matrix::scalar(1.0));
        let lg = tape.constant(Matrix::scalar(2.0));
        let lb = tape.constant(Matrix::scalar(3.0));
        let t = total_loss(&mut tape, ce, Some(lg), Some(lb), w).unwrap();
        assert_eq!(tape.scalar(t), 6.0);
        let before = tape.len();
        let t0 = total_loss(&mut tape, ce, Some(lg), Some(lb), LossWeights::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(t0, ce);
        assert_eq!(tape.len(), before);
        assert!(LossWeights::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn fitnet_examples() {
        let mut tape = Tape::new();
        let h = tape.constant(Matrix::scalar(1.0));
        let r = tape.constant(Matrix::scalar(2.0));
        let l = fitnet_loss(&mut tape, h, &Matrix::scalar(0.0), r).unwrap();
        assert_eq!(tape.scalar(l), 2.0);
        let l = fitnet_loss(&mut tape, h, &Matrix::scalar(2.0), r).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        assert!(fitnet_loss(&mut tape, h, &Matrix::zeros(1, 2), r).is_err());
    }

    #[test]
    fn vanilla_kd_reduces_and_matches_peer_kd() {
        let zs = Matrix::from_rows(&[[0.4, -0.1, 1.3]]).unwrap();
        let zt = Matrix::from_rows(&[[1.0, 0.2, -0.7]]).unwrap();
        let y = Labels::Single(vec![2]);
        let mut tape = Tape::new();
        let s = tape.constant(zs.clone());
        let ce = supervised_loss(&mut tape, s, &y, &[true]).unwrap();
        let kd0 = vanilla_kd_loss(&mut tape, s, &zt, &y, &[true], 3.0, 0.0, false).unwrap();
        assert_eq!(tape.scalar(kd0), tape.scalar(ce));

        let kd = vanilla_kd_loss(&mut tape, s, &zt, &y, &[true], 3.0, 1.0, false).unwrap();
        // With two students, the peer target of student 0 is student 1's
        // softened output, so the KD term equals global KD against it.
        let probs = [softened_probs_value(&zs, 3.0, false).unwrap(), softened_probs_value(&zt, 3.0, false).unwrap()];
        let target = peer_average(&probs, 0).unwrap();
        let g = global_kd_loss_from_logits(&mut tape, s, &target, 3.0, KlOrder::TargetStudent, false).unwrap();
        assert!(close(tape.scalar(kd), tape.scalar(ce) + tape.scalar(g), 1e-12));

        let same = vanilla_kd_loss(&mut tape, s, &zs, &y, &[true], 3.0, 1.0, false).unwrap();
        assert!(close(tape.scalar(same), tape.scalar(ce), 1e-12));
    }
}
