use ndarray::Array2;

use serde::{Deserialize, Serialize};

use super::NetError;
use crate::codec::SparseFrame;

/// Row-wise `log softmax(z / T)`.
fn log_softmax_row(z: &[f64], t: f64, out: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| ((v - m) / t).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - m) / t - lse;
    }
}

/// Cross-entropy against hard labels delayed by `label_delay` frames: the
/// output at frame `t` is scored against `labels[t - delay]`.
///
/// Returns the mean over the `frames - delay` scored frames and the gradient
/// `(softmax(z) - onehot) / scored` on those frames (zero elsewhere).
pub fn hard_ce_loss(
    logits: &Array2<f64>,
    labels: &[u16],
    label_delay: usize,
) -> Result<(f64, Array2<f64>), NetError> {
    let logits = logits.as_standard_layout();
    let (frames, n) = logits.dim();
    if frames < label_delay {
        return Err(NetError::TooFewFrames {
            frames,
            delay: label_delay,
        });
    }
    if labels.len() < frames - label_delay {
        return Err(NetError::Dimension(format!(
            "{} labels for {} scored frames",
            labels.len(),
            frames - label_delay
        )));
    }
    let scored = frames - label_delay;
    let mut grad = Array2::zeros((frames, n));
    if scored == 0 {
        return Ok((0.0, grad));
    }
    let mut loss = 0.0;
    let mut logp = vec![0.0; n];
    for t in label_delay..frames {
        let label = labels[t - label_delay] as usize;
        if label >= n {
            return Err(NetError::LabelOutOfRange {
                frame: t - label_delay,
                label,
                n_classes: n,
            });
        }
        let z = logits.row(t);
        log_softmax_row(z.as_slice().expect("contiguous row"), 1.0, &mut logp);
        loss -= logp[label];
        let mut g = grad.row_mut(t);
        for (gi, lp) in g.iter_mut().zip(&logp) {
            *gi = lp.exp() / scored as f64;
        }
        g[label] -= 1.0 / scored as f64;
    }
    Ok((loss / scored as f64, grad))
}

/// Dense teacher distribution `q'` of one sparse frame at temperature `t`.
pub fn teacher_distribution(frame: &SparseFrame, n_classes: usize, t: f64) -> Vec<f64> {
    let mut q = vec![0.0; n_classes];
    for (&(idx, _), p) in frame.entries().iter().zip(frame.probabilities(t)) {
        q[idx as usize] = p;
    }
    q
}

/// Cross-entropy of the student against top-k teacher posteriors, both at
/// temperature `t`: mean over frames of `-sum_{i in K} q'_i log p_i` with
/// `p = softmax(z / T)`. Gradient per frame is `(p - q') / T`, averaged.
pub fn soft_ce_loss(
    logits: &Array2<f64>,
    targets: &[SparseFrame],
    t: f64,
) -> Result<(f64, Array2<f64>), NetError> {
    let logits = logits.as_standard_layout();
    let (frames, n) = logits.dim();
    check_targets(targets, frames, n, t)?;
    let mut grad = Array2::zeros((frames, n));
    if frames == 0 {
        return Ok((0.0, grad));
    }
    let mut loss = 0.0;
    let mut logp = vec![0.0; n];
    for (f, target) in targets.iter().enumerate() {
        let z = logits.row(f);
        log_softmax_row(z.as_slice().expect("contiguous row"), t, &mut logp);
        let mut g = grad.row_mut(f);
        for (gi, lp) in g.iter_mut().zip(&logp) {
            *gi = lp.exp();
        }
        for (&(idx, _), q) in target.entries().iter().zip(target.probabilities(t)) {
            loss -= q * logp[idx as usize];
            g[idx as usize] -= q;
        }
        g.mapv_inplace(|v| v / (t * frames as f64));
    }
    Ok((loss / frames as f64, grad))
}

/// How a sparse frame is expanded into a full teacher distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TargetRule {
    /// Selected classes renormalized by the emphasis factor; the rest get zero.
    #[default]
    TopK,
    /// Unselected logits floored at a constant `C`; `None` uses the per-frame
    /// default `min selected - 50 T`.
    ConstantFloor { c: Option<f64> },
}

/// Dense teacher distribution of one sparse frame under `rule`.
pub fn target_distribution(frame: &SparseFrame, n_classes: usize, t: f64, rule: TargetRule) -> Vec<f64> {
    match rule {
        TargetRule::TopK => teacher_distribution(frame, n_classes, t),
        TargetRule::ConstantFloor { c } => {
            let e = frame.entries();
            let min_sel = e.iter().map(|&(_, z)| z as f64).fold(f64::INFINITY, f64::min);
            let max_sel = e.iter().map(|&(_, z)| z as f64).fold(f64::NEG_INFINITY, f64::max);
            let c = c.unwrap_or(min_sel - 50.0 * t);
            let m = max_sel.max(c);
            let floor = ((c - m) / t).exp();
            let mut q = vec![floor; n_classes];
            for &(idx, z) in e {
                q[idx as usize] = ((z as f64 - m) / t).exp();
            }
            let total: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= total);
            q
        }
    }
}

/// [`soft_ce_loss`] generalized to any [`TargetRule`]. The loss is
/// `-sum_i q_i log p_i` over all classes.
pub fn soft_ce_loss_with(
    logits: &Array2<f64>,
    targets: &[SparseFrame],
    t: f64,
    rule: TargetRule,
) -> Result<(f64, Array2<f64>), NetError> {
    if rule == TargetRule::TopK {
        return soft_ce_loss(logits, targets, t);
    }
    let logits = logits.as_standard_layout();
    let (frames, n) = logits.dim();
    check_targets(targets, frames, n, t)?;
    let mut grad = Array2::zeros((frames, n));
    if frames == 0 {
        return Ok((0.0, grad));
    }
    let mut loss = 0.0;
    let mut logp = vec![0.0; n];
    for (f, target) in targets.iter().enumerate() {
        let q = target_distribution(target, n, t, rule);
        log_softmax_row(logits.row(f).as_slice().expect("contiguous row"), t, &mut logp);
        let mut g = grad.row_mut(f);
        for i in 0..n {
            loss -= q[i] * logp[i];
            g[i] = (logp[i].exp() - q[i]) / (t * frames as f64);
        }
    }
    Ok((loss / frames as f64, grad))
}

fn check_targets(targets: &[SparseFrame], frames: usize, n: usize, t: f64) -> Result<(), NetError> {
    if targets.len() != frames {
        return Err(NetError::Dimension(format!(
            "{} target frames for {frames} student frames",
            targets.len()
        )));
    }
    if !(t > 0.0) {
        return Err(NetError::InvalidConfig(format!("temperature must be positive, got {t}")));
    }
    for (f, target) in targets.iter().enumerate() {
        if target.k() == 0 {
            return Err(NetError::EmptyTarget(f));
        }
        if let Some(&(idx, _)) = target.entries().iter().find(|(i, _)| *i as usize >= n) {
            return Err(NetError::LabelOutOfRange {
                frame: f,
                label: idx as usize,
                n_classes: n,
            });
        }
    }
    Ok(())
}
