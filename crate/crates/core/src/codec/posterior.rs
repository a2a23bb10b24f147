use serde::{Deserialize, Serialize};

use super::CodecError;

/// Pre-softmax activations `z_1..z_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self, CodecError> {
        check_logits(&values)?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<&[f64]> for LogitVector {
    type Error = CodecError;

    fn try_from(values: &[f64]) -> Result<Self, CodecError> {
        Self::new(values.to_vec())
    }
}

fn check_logits(z: &[f64]) -> Result<(), CodecError> {
    if z.is_empty() {
        return Err(CodecError::Empty);
    }
    match z.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CodecError::NonFinite(i)),
        None => Ok(()),
    }
}

fn check_temperature(t: f64) -> Result<(), CodecError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(CodecError::BadTemperature(t))
    }
}

/// A probability vector over `N` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDistribution(Vec<f64>);

impl DenseDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Temperature softmax `exp(z_i / T) / sum_j exp(z_j / T)`, max-shifted.
pub fn softmax_t(z: &LogitVector, t: f64) -> Result<DenseDistribution, CodecError> {
    check_temperature(t)?;
    Ok(DenseDistribution(softmax_slice(z.values(), t)))
}

pub(crate) fn softmax_slice(z: &[f64], t: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

/// Callers guarantee finite logits; `-0.0` and `0.0` tie.
fn rank_order(z: &[f64], a: usize, b: usize) -> std::cmp::Ordering {
    z[b].partial_cmp(&z[a]).expect("finite logits").then(a.cmp(&b))
}

/// Indices of the `k` largest logits, ordered by descending logit with ties
/// going to the lower index.
pub fn select_topk(z: &LogitVector, k: usize) -> Result<Vec<usize>, CodecError> {
    let n = z.len();
    if k == 0 || k > n {
        return Err(CodecError::BadK { k, n });
    }
    Ok(topk_slice(z.values(), k))
}

pub(crate) fn topk_slice(z: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(z, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(z, a, b));
    idx
}

/// Top-k posterior: selected classes keep `exp(z_i/T)` renormalized over the
/// selection, everything else is zero. Returns `(q', A)` with `q'_i = A q_i`
/// on the selection and `A = sum_all exp(z/T) / sum_selected exp(z/T) >= 1`.
pub fn topk_posterior(
    z: &LogitVector,
    k: usize,
    t: f64,
) -> Result<(DenseDistribution, f64), CodecError> {
    check_temperature(t)?;
    let sel = select_topk(z, k)?;
    let z = z.values();
    let m = z[sel[0]];
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
    let selected: f64 = sel.iter().map(|&i| e[i]).sum();
    let total: f64 = e.iter().sum();
    let mut q = vec![0.0; z.len()];
    for &i in &sel {
        q[i] = e[i] / selected;
    }
    Ok((DenseDistribution(q), total / selected))
}

/// Default floor constant: smallest selected logit minus `50 T`.
pub fn default_floor_constant(z: &LogitVector, k: usize, t: f64) -> Result<f64, CodecError> {
    let sel = select_topk(z, k)?;
    Ok(z.values()[*sel.last().expect("k >= 1")] - 50.0 * t)
}

/// Constant-floor variant: unselected logits are replaced by `c`, so every
/// suppressed class gets `exp(c/T) / D` with
/// `D = (N - k) exp(c/T) + sum_selected exp(z/T)`.
pub fn topk_posterior_c(
    z: &LogitVector,
    k: usize,
    t: f64,
    c: f64,
) -> Result<DenseDistribution, CodecError> {
    check_temperature(t)?;
    let sel = select_topk(z, k)?;
    let zs = z.values();
    let min_selected = zs[*sel.last().expect("k >= 1")];
    if !(c <= min_selected) {
        return Err(CodecError::FloorTooHigh { c, min_selected });
    }
    let m = zs[sel[0]];
    let floor = ((c - m) / t).exp();
    let mut q = vec![floor; zs.len()];
    for &i in &sel {
        q[i] = ((zs[i] - m) / t).exp();
    }
    let denom = (zs.len() - k) as f64 * floor + sel.iter().map(|&i| q[i]).sum::<f64>();
    q.iter_mut().for_each(|v| *v /= denom);
    Ok(DenseDistribution(q))
}

/// Upper bound `(N - k) exp((c - max z) / T)` on the distance between the
/// constant-floor and the zeroed top-k posteriors.
pub fn suppressed_mass_bound(z: &LogitVector, k: usize, t: f64, c: f64) -> f64 {
    let m = z.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (z.len() - k) as f64 * ((c - m) / t).exp()
}

/// Selection size, advisory temperature and optional explicit floor constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecParams {
    pub k: usize,
    pub temperature: f64,
    /// `None` selects the default policy (min selected logit - 50 T).
    pub floor_constant: Option<f64>,
}

impl CodecParams {
    pub fn new(k: usize, temperature: f64) -> Self {
        Self {
            k,
            temperature,
            floor_constant: None,
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<(), CodecError> {
        check_temperature(self.temperature)?;
        if self.k == 0 || self.k > n_classes {
            return Err(CodecError::BadK {
                k: self.k,
                n: n_classes,
            });
        }
        Ok(())
    }
}

/// The `k` preserved `(class, logit)` pairs of one frame, in descending logit
/// order with ascending-index tie breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFrame {
    entries: Vec<(u16, f32)>,
}

impl SparseFrame {
    /// Selects the top `k` of `z` after rounding to 32-bit storage precision.
    pub fn from_logits(z: &[f64], k: usize) -> Result<Self, CodecError> {
        check_logits(z)?;
        if z.len() > u16::MAX as usize + 1 {
            return Err(CodecError::ClassCountOverflow(z.len()));
        }
        if k == 0 || k > z.len() {
            return Err(CodecError::BadK { k, n: z.len() });
        }
        // Select on the stored values so ties created by rounding keep the index rule.
        let rounded: Vec<f64> = z.iter().map(|&v| v as f32 as f64).collect();
        if let Some(i) = rounded.iter().position(|v| !v.is_finite()) {
            return Err(CodecError::NonFinite(i));
        }
        let entries = topk_slice(&rounded, k)
            .into_iter()
            .map(|i| (i as u16, rounded[i] as f32))
            .collect();
        Ok(Self { entries })
    }

    /// Builds a frame from stored pairs, checking the ordering invariants.
    pub fn from_entries(entries: Vec<(u16, f32)>) -> Result<Self, CodecError> {
        let frame = Self { entries };
        frame.check("<memory>", 0, None)?;
        Ok(frame)
    }

    pub(crate) fn from_entries_unchecked(entries: Vec<(u16, f32)>) -> Self {
        Self { entries }
    }

    pub(crate) fn check(
        &self,
        utterance: &str,
        frame: usize,
        n_classes: Option<u32>,
    ) -> Result<(), CodecError> {
        if self.entries.is_empty() {
            return Err(CodecError::BadK { k: 0, n: n_classes.unwrap_or(0) as usize });
        }
        let mut seen = std::collections::HashSet::with_capacity(self.entries.len());
        for (pos, &(idx, logit)) in self.entries.iter().enumerate() {
            if !logit.is_finite() {
                return Err(CodecError::NonFinite(pos));
            }
            if let Some(n) = n_classes {
                if idx as u32 >= n {
                    return Err(CodecError::IndexOutOfRange {
                        utterance: utterance.to_string(),
                        frame,
                        index: idx,
                        n_classes: n,
                    });
                }
            }
            if !seen.insert(idx) {
                return Err(CodecError::DuplicateIndex {
                    utterance: utterance.to_string(),
                    frame,
                    index: idx,
                });
            }
            if pos > 0 {
                let (pi, pl) = self.entries[pos - 1];
                if pl < logit || (pl == logit && pi > idx) {
                    return Err(CodecError::Unsorted {
                        utterance: utterance.to_string(),
                        frame,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(u16, f32)] {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    /// Keeps the best `k` entries (a no-op when `k >= self.k()`).
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            entries: self.entries[..k.min(self.entries.len())].to_vec(),
        }
    }

    /// Teacher probabilities on the selection at temperature `t`, aligned with
    /// [`Self::entries`]; they sum to one.
    pub fn probabilities(&self, t: f64) -> Vec<f64> {
        let z: Vec<f64> = self.entries.iter().map(|&(_, l)| l as f64).collect();
        softmax_slice(&z, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn signed_zeros_tie_by_index() {
        assert_eq!(select_topk(&lv(&[-1.0, 0.0, -0.0, 2.0]), 3).unwrap(), vec![3, 1, 2]);
        assert_eq!(select_topk(&lv(&[-1.0, -0.0, 0.0, 2.0]), 2).unwrap(), vec![3, 1]);
        let f = SparseFrame::from_logits(&[-0.0, 0.0, -3.0], 2).unwrap();
        assert!(SparseFrame::from_entries(f.entries().to_vec()).is_ok());
    }

    #[test]
    fn softmax_constant_and_two_point() {
        let q = softmax_t(&lv(&[3.5; 6]), 0.7).unwrap();
        assert!(q.probs().iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-15));
        let q = softmax_t(&lv(&[0.0, 2f64.ln()]), 1.0).unwrap();
        assert!((q.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_matches_high_precision_reference() {
        // mpmath, 50 digits, T = 2 (tests/oracles/reference_values.py)
        let cases: [(&[f64], &[f64]); 2] = [
            (
                &[0.75, -1.25, 3.5, 2.0, -0.5, 1.125, 0.0, -3.75],
                &[
                    0.102_823_721_357_497_741_08,
                    0.037_826_733_152_164_367_652,
                    0.406_675_706_905_110_721_82,
                    0.192_100_001_754_282_422_7,
                    0.055_037_571_979_452_847_423,
                    0.124_029_083_059_447_921_53,
                    0.070_669_641_294_398_507_298,
                    0.010_837_540_497_645_470_498,
                ],
            ),
            (
                &[10.0, 9.5, -20.0, 4.25, 4.25],
                &[
                    0.528_643_666_857_697_434_21,
                    0.411_708_101_714_513_642_72,
                    1.617_133_244_103_637_798_7e-7,
                    0.029_824_034_857_232_256_357,
                    0.029_824_034_857_232_256_357,
                ],
            ),
        ];
        for (z, want) in cases {
            let q = softmax_t(&lv(z), 2.0).unwrap();
            for (a, b) in q.probs().iter().zip(want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(LogitVector::new(vec![]), Err(CodecError::Empty)));
        assert!(matches!(
            LogitVector::new(vec![0.0, f64::INFINITY]),
            Err(CodecError::NonFinite(1))
        ));
        assert!(matches!(
            softmax_t(&lv(&[1.0]), 0.0),
            Err(CodecError::BadTemperature(_))
        ));
        assert!(matches!(
            select_topk(&lv(&[1.0, 2.0]), 3),
            Err(CodecError::BadK { k: 3, n: 2 })
        ));
        assert!(select_topk(&lv(&[1.0, 2.0]), 0).is_err());
    }

    #[test]
    fn topk_ordering_and_ties() {
        assert_eq!(select_topk(&lv(&[3.0, 1.0, 2.0, 0.0]), 2).unwrap(), vec![0, 2]);
        assert_eq!(select_topk(&lv(&[3.0, 1.0, 2.0, 0.0]), 4).unwrap(), vec![0, 2, 1, 3]);
        assert_eq!(select_topk(&lv(&[1.0, 5.0, 1.0, 5.0, 1.0]), 3).unwrap(), vec![1, 3, 0]);
    }

    #[test]
    fn topk_posterior_reference_case() {
        // mpmath: q' = (0.73105857863000487925, 0, 0.26894142136999512075), A = 1.0989380198014472008
        let (q, a) = topk_posterior(&lv(&[3.0, 1.0, 2.0]), 2, 1.0).unwrap();
        assert!((q.probs()[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert_eq!(q.probs()[1], 0.0);
        assert!((q.probs()[2] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((a - 1.098_938_019_801_447_2).abs() < 1e-14);
    }

    #[test]
    fn full_selection_and_uniform_logits() {
        let z = lv(&[0.3, -1.0, 2.2, 0.9]);
        let (q, a) = topk_posterior(&z, 4, 1.5).unwrap();
        let dense = softmax_t(&z, 1.5).unwrap();
        assert_eq!(a, 1.0);
        for (x, y) in q.probs().iter().zip(dense.probs()) {
            assert!((x - y).abs() < 1e-15);
        }
        let (q, a) = topk_posterior(&lv(&[0.5; 10]), 4, 2.0).unwrap();
        assert!((a - 2.5).abs() < 1e-15);
        assert_eq!(q.probs().iter().filter(|&&p| p > 0.0).count(), 4);
        assert!(q.probs().iter().filter(|&&p| p > 0.0).all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn floor_variant() {
        let z = lv(&[3.0, 1.0, 2.0]);
        let (q, _) = topk_posterior(&z, 2, 1.0).unwrap();
        let qc = topk_posterior_c(&z, 2, 1.0, -50.0).unwrap();
        for i in [0, 2] {
            assert!((q.probs()[i] - qc.probs()[i]).abs() < 1e-12);
        }
        assert!(qc.probs()[1] > 0.0);
        assert!((qc.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // all logits equal, full selection, floor at the minimum: plain softmax
        let z = lv(&[1.25; 5]);
        let qc = topk_posterior_c(&z, 5, 0.8, 1.25).unwrap();
        assert!(qc.probs().iter().all(|&p| (p - 0.2).abs() < 1e-15));

        assert!(matches!(
            topk_posterior_c(&lv(&[3.0, 1.0, 2.0]), 2, 1.0, 2.5),
            Err(CodecError::FloorTooHigh { .. })
        ));

        // suppressed mass shrinks as C decreases
        let z = lv(&[0.4, 2.0, -1.0, 1.1, 0.0]);
        let masses: Vec<f64> = [-1.0, -5.0, -20.0, -80.0]
            .iter()
            .map(|&c| topk_posterior_c(&z, 2, 1.3, c).unwrap().probs()[2])
            .collect();
        assert!(masses.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn default_floor_is_fifty_temperatures_below() {
        let z = lv(&[3.0, 1.0, 2.0]);
        assert_eq!(default_floor_constant(&z, 2, 2.0).unwrap(), 2.0 - 100.0);
    }

    #[test]
    fn sparse_frame_checks() {
        let f = SparseFrame::from_logits(&[0.5, 2.0, -1.0, 2.0], 3).unwrap();
        assert_eq!(f.entries(), &[(1, 2.0), (3, 2.0), (0, 0.5)]);
        assert_eq!(f.truncated(1).entries(), &[(1, 2.0)]);
        let p = f.probabilities(1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(SparseFrame::from_entries(vec![(3, 2.0), (1, 2.0)]).is_err());
        assert!(SparseFrame::from_entries(vec![(1, 1.0), (2, 2.0)]).is_err());
        assert!(SparseFrame::from_entries(vec![(1, 2.0), (1, 1.0)]).is_err());
        assert!(SparseFrame::from_entries(vec![]).is_err());
        // rounding to f32 creates a tie; the lower index must come first
        let a = 1.0f64 + 1e-12;
        let f = SparseFrame::from_logits(&[1.0, a], 2).unwrap();
        assert_eq!(f.entries(), &[(0, 1.0), (1, 1.0)]);
    }
}
