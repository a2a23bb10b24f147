use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{forward, NetError, NetParams};
use crate::codec::posterior_argmax;

/// Per-frame argmax (lowest index on ties), runs shorter than `min_run`
/// frames dropped, then consecutive repeats collapsed.
pub fn decode_tokens(logits: &Array2<f64>, min_run: usize) -> Vec<u16> {
    let logits = logits.as_standard_layout();
    let mut runs: Vec<(u16, usize)> = Vec::new();
    for row in logits.rows() {
        let best = posterior_argmax(row.as_slice().expect("contiguous row")) as u16;
        match runs.last_mut() {
            Some((c, n)) if *c == best => *n += 1,
            _ => runs.push((best, 1)),
        }
    }
    let mut out: Vec<u16> = Vec::new();
    for (c, n) in runs {
        if n >= min_run.max(1) && out.last() != Some(&c) {
            out.push(c);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Levenshtein alignment of `hyp` against `reference`; returns
/// `(S + D + I) / |reference|` and the counts of one minimal alignment.
pub fn token_error_rate(hyp: &[u16], reference: &[u16]) -> Result<(f64, EditCounts), NetError> {
    if reference.is_empty() {
        return Err(NetError::EmptyReference);
    }
    let counts = align(hyp, reference);
    Ok((counts.total() as f64 / reference.len() as f64, counts))
}

fn align(hyp: &[u16], reference: &[u16]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    // cell (i, j): reference[..i] against hyp[..j]
    let mut prev: Vec<(usize, EditCounts)> = (0..=m)
        .map(|j| {
            (
                j,
                EditCounts {
                    insertions: j,
                    ..Default::default()
                },
            )
        })
        .collect();
    for i in 1..=n {
        let mut cur = Vec::with_capacity(m + 1);
        cur.push((
            i,
            EditCounts {
                deletions: i,
                ..Default::default()
            },
        ));
        for j in 1..=m {
            let same = reference[i - 1] == hyp[j - 1];
            let (dc, mut diag) = prev[j - 1];
            let diag_cost = dc + usize::from(!same);
            if !same {
                diag.substitutions += 1;
            }
            let (uc, mut up) = prev[j];
            up.deletions += 1;
            let (lc, mut left) = cur[j - 1];
            left.insertions += 1;
            let best = if diag_cost <= uc + 1 && diag_cost <= lc + 1 {
                (diag_cost, diag)
            } else if uc <= lc {
                (uc + 1, up)
            } else {
                (lc + 1, left)
            };
            cur.push(best);
        }
        prev = cur;
    }
    prev[m].1
}

pub struct EvalExample<'a> {
    pub id: &'a str,
    pub feats: &'a Array2<f64>,
    pub frame_labels: &'a [u16],
    pub token_refs: &'a [u16],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub frames: usize,
    pub frames_correct: usize,
    pub ref_tokens: usize,
    pub edits: EditCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frame_accuracy: f64,
    /// Corpus-level `sum(S + D + I) / sum(|ref|)`.
    pub token_error_rate: f64,
    pub utterances: Vec<UtteranceScore>,
}

/// Scores a model on labeled utterances. Outputs before the label delay are
/// skipped, so frame `t` is compared with `frame_labels[t - delay]`.
pub fn evaluate(
    params: &NetParams,
    examples: &[EvalExample<'_>],
    min_run: usize,
) -> Result<EvalReport, NetError> {
    let delay = params.label_delay;
    let mut utterances = Vec::with_capacity(examples.len());
    for ex in examples {
        let logits = forward(params, ex.feats)?;
        let frames = logits.nrows().saturating_sub(delay);
        let aligned = logits.slice(s![delay.min(logits.nrows()).., ..]).to_owned();
        let frames_correct = aligned
            .rows()
            .into_iter()
            .zip(ex.frame_labels)
            .filter(|(row, &l)| posterior_argmax(row.as_slice().unwrap()) == l as usize)
            .count();
        let hyp = decode_tokens(&aligned, min_run);
        let (_, edits) = token_error_rate(&hyp, ex.token_refs)?;
        utterances.push(UtteranceScore {
            id: ex.id.to_string(),
            frames,
            frames_correct,
            ref_tokens: ex.token_refs.len(),
            edits,
        });
    }
    let total_frames: usize = utterances.iter().map(|u| u.frames).sum();
    let correct: usize = utterances.iter().map(|u| u.frames_correct).sum();
    let ref_tokens: usize = utterances.iter().map(|u| u.ref_tokens).sum();
    let edits: usize = utterances.iter().map(|u| u.edits.total()).sum();
    Ok(EvalReport {
        frame_accuracy: if total_frames == 0 {
            0.0
        } else {
            correct as f64 / total_frames as f64
        },
        token_error_rate: if ref_tokens == 0 {
            0.0
        } else {
            edits as f64 / ref_tokens as f64
        },
        utterances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_hot_logits(seq: &[usize], n: usize) -> Array2<f64> {
        let mut z = Array2::zeros((seq.len(), n));
        for (t, &c) in seq.iter().enumerate() {
            z[[t, c]] = 1.0;
        }
        z
    }

    #[test]
    fn collapse_rule() {
        let z = one_hot_logits(&[2, 2, 2, 5, 5, 2], 6);
        assert_eq!(decode_tokens(&z, 1), vec![2, 5, 2]);
        assert_eq!(decode_tokens(&z, 0), vec![2, 5, 2]);
        assert!(decode_tokens(&Array2::zeros((0, 4)), 1).is_empty());
        // ties go to the lower index
        assert_eq!(decode_tokens(&Array2::zeros((3, 4)), 1), vec![0]);
    }

    #[test]
    fn short_runs_are_dropped_before_collapsing() {
        let z = one_hot_logits(&[1, 1, 1, 4, 1, 1, 3, 3, 3, 2], 6);
        assert_eq!(decode_tokens(&z, 1), vec![1, 4, 1, 3, 2]);
        assert_eq!(decode_tokens(&z, 2), vec![1, 3]);
        assert_eq!(decode_tokens(&z, 3), vec![1, 3]);
        assert!(decode_tokens(&z, 4).is_empty());
    }

    #[test]
    fn random_logits_match_two_pass_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let f = rng.random_range(0..30);
            // few distinct values so ties occur
            let z = Array2::from_shape_simple_fn((f, 4), || rng.random_range(0..3) as f64);
            let argmaxes: Vec<u16> = z
                .rows()
                .into_iter()
                .map(|r| {
                    let mut best = 0;
                    for i in 1..r.len() {
                        if r[i] > r[best] {
                            best = i;
                        }
                    }
                    best as u16
                })
                .collect();
            let mut collapsed = argmaxes.clone();
            collapsed.dedup();
            assert_eq!(decode_tokens(&z, 1), collapsed);
        }
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(token_error_rate(&[1, 2, 3], &[1, 2, 3]).unwrap().0, 0.0);
        let (ter, c) = token_error_rate(&[0, 1, 0], &[0, 0]).unwrap();
        assert_eq!(c.total(), 1);
        assert_eq!(c.insertions, 1);
        assert_eq!(ter, 0.5);
        let (_, c) = token_error_rate(&[], &[4, 5]).unwrap();
        assert_eq!(c.deletions, 2);
        let (_, c) = token_error_rate(&[9], &[4]).unwrap();
        assert_eq!(c.substitutions, 1);
        assert!(matches!(token_error_rate(&[1], &[]), Err(NetError::EmptyReference)));
    }

    /// Minimal number of edits by exhaustive search over edit scripts.
    fn brute_force(hyp: &[u16], reference: &[u16]) -> usize {
        if reference.is_empty() {
            return hyp.len();
        }
        if hyp.is_empty() {
            return reference.len();
        }
        let sub = usize::from(hyp[0] != reference[0]) + brute_force(&hyp[1..], &reference[1..]);
        let del = 1 + brute_force(hyp, &reference[1..]);
        let ins = 1 + brute_force(&hyp[1..], reference);
        sub.min(del).min(ins)
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let hyp: Vec<u16> = (0..rng.random_range(0..=8)).map(|_| rng.random_range(0..3)).collect();
            let reference: Vec<u16> =
                (0..rng.random_range(1..=8)).map(|_| rng.random_range(0..3)).collect();
            let (ter, c) = token_error_rate(&hyp, &reference).unwrap();
            let want = brute_force(&hyp, &reference);
            assert_eq!(c.total(), want, "{hyp:?} vs {reference:?}");
            assert!((ter - want as f64 / reference.len() as f64).abs() < 1e-15);
            // counts must describe a valid alignment
            assert_eq!(
                hyp.len() + c.deletions,
                reference.len() + c.insertions
            );
        }
    }
}
