//! Phoneme-level Viterbi decoding against a bigram transition model.

use serde::{Deserialize, Serialize};

use super::WakewordError;
use crate::phonostream::{AcousticStream, PhoneId};

/// Phoneme transition model: initial and transition probabilities.
///
/// Stored as probabilities; decoding happens in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeBigram {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

impl PhonemeBigram {
    /// Uniform initial and transition distributions over `n` phonemes.
    pub fn uniform(n: usize) -> Self {
        let p = 1.0 / n as f64;
        Self { initial: vec![p; n], transition: vec![vec![p; n]; n] }
    }

    /// Sticky variant: self-transition `stay`, remaining mass spread evenly.
    pub fn sticky(n: usize, stay: f64) -> Self {
        let rest = (1.0 - stay) / (n - 1) as f64;
        let transition = (0..n)
            .map(|i| (0..n).map(|j| if i == j { stay } else { rest }).collect())
            .collect();
        Self { initial: vec![1.0 / n as f64; n], transition }
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    pub fn validate(&self) -> Result<(), WakewordError> {
        let n = self.initial.len();
        if n == 0 || self.transition.len() != n {
            return Err(WakewordError::MalformedModel("bigram shape mismatch".into()));
        }
        let check_row = |row: &[f64], what: &str| -> Result<(), WakewordError> {
            if row.len() != n {
                return Err(WakewordError::MalformedModel(format!("{what} wrong length")));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(WakewordError::MalformedModel(format!("{what} entry outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(WakewordError::MalformedModel(format!("{what} sums to {sum}")));
            }
            Ok(())
        };
        check_row(&self.initial, "initial")?;
        for (i, row) in self.transition.iter().enumerate() {
            check_row(row, &format!("transition row {i}"))?;
        }
        Ok(())
    }

    fn log_initial(&self) -> Vec<f64> {
        self.initial.iter().map(|&p| p.ln()).collect()
    }

    fn log_transition(&self) -> Vec<Vec<f64>> {
        self.transition.iter().map(|r| r.iter().map(|&p| p.ln()).collect()).collect()
    }
}

/// Result of a frame-level decode: one state per frame plus the path score.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSequence {
    pub frame_states: Vec<PhoneId>,
    pub score: f64,
}

/// Viterbi decode: maximizes sum of log posterior plus log transition.
///
/// Per-step ties are broken toward the lower phoneme index (both for
/// predecessors and for the final state), so equal-score inputs decode
/// identically everywhere.
#[allow(clippy::needless_range_loop)] // the recursion indexes frames and psi together
pub fn decode_phonemes(
    stream: &AcousticStream,
    bigram: &PhonemeBigram,
) -> Result<DecodedSequence, WakewordError> {
    if stream.frames.is_empty() {
        return Err(WakewordError::EmptyStream);
    }
    bigram.validate()?;
    let n = bigram.len();
    let t_len = stream.frames.len();
    let log_init = bigram.log_initial();
    let log_trans = bigram.log_transition();

    let logpost = |t: usize, s: usize| -> f64 { stream.frames[t].posterior[s].ln() };

    let mut delta = vec![f64::NEG_INFINITY; n];
    let mut psi: Vec<Vec<usize>> = vec![vec![0; n]; t_len];
    for s in 0..n {
        delta[s] = log_init[s] + logpost(0, s);
    }
    let mut next = vec![f64::NEG_INFINITY; n];
    for t in 1..t_len {
        for s in 0..n {
            let mut best_prev = 0;
            let mut best = delta[0] + log_trans[0][s];
            for prev in 1..n {
                let cand = delta[prev] + log_trans[prev][s];
                if cand > best {
                    best = cand;
                    best_prev = prev;
                }
            }
            psi[t][s] = best_prev;
            next[s] = best + logpost(t, s);
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut last = 0;
    for s in 1..n {
        if delta[s] > delta[last] {
            last = s;
        }
    }
    let score = delta[last];
    let mut frame_states = vec![0; t_len];
    frame_states[t_len - 1] = last;
    for t in (0..t_len - 1).rev() {
        frame_states[t] = psi[t + 1][frame_states[t + 1]];
    }
    Ok(DecodedSequence { frame_states, score })
}

/// A run of identical decoded phonemes with its frame span (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollapsedSegment {
    pub phone: PhoneId,
    pub first_frame: usize,
    pub last_frame: usize,
}

/// Run-length collapse of a frame-level state sequence.
pub fn collapse(frame_states: &[PhoneId]) -> Vec<CollapsedSegment> {
    let mut out: Vec<CollapsedSegment> = Vec::new();
    for (i, &p) in frame_states.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.phone == p => seg.last_frame = i,
            _ => out.push(CollapsedSegment { phone: p, first_frame: i, last_frame: i }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonostream::{
        keyword_script, synthesize_stream, PhonemeAlphabet, PhonemeFrame, StreamTruth,
        UtteranceScript,
    };

    fn tiny_stream(posteriors: Vec<Vec<f64>>) -> AcousticStream {
        let frames = posteriors
            .into_iter()
            .enumerate()
            .map(|(i, posterior)| PhonemeFrame { t_ms: i as u64 * 10, posterior })
            .collect();
        AcousticStream {
            frame_period_ms: 10,
            frames,
            truth: StreamTruth {
                script: UtteranceScript {
                    words: vec![],
                    start_ms: 0,
                    label: crate::phonostream::StreamLabel::Negative,
                },
                keyword_end_ms: None,
                keyword_start_ms: None,
            },
        }
    }

    /// Exhaustive max over all state paths, same accumulation order as the
    /// decoder. Ties keep the first (lexicographically smaller) path.
    fn brute_force(stream: &AcousticStream, bigram: &PhonemeBigram) -> (Vec<usize>, f64) {
        let n = bigram.len();
        let t_len = stream.frames.len();
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut path = vec![0usize; t_len];
        loop {
            let mut score = bigram.initial[path[0]].ln() + stream.frames[0].posterior[path[0]].ln();
            for t in 1..t_len {
                score += bigram.transition[path[t - 1]][path[t]].ln()
                    + stream.frames[t].posterior[path[t]].ln();
            }
            if best.as_ref().map(|(_, s)| score > *s).unwrap_or(true) {
                best = Some((path.clone(), score));
            }
            // next path in lexicographic order
            let mut i = t_len;
            loop {
                if i == 0 {
                    return best.unwrap();
                }
                i -= 1;
                path[i] += 1;
                if path[i] < n {
                    break;
                }
                path[i] = 0;
            }
        }
    }

    #[test]
    fn single_peaked_frame_decodes_to_that_phoneme() {
        let mut post = vec![0.0; 4];
        post[2] = 1.0;
        let stream = tiny_stream(vec![post]);
        let bigram = PhonemeBigram::uniform(4);
        let d = decode_phonemes(&stream, &bigram).unwrap();
        assert_eq!(d.frame_states, vec![2]);
    }

    #[test]
    fn three_frames_match_exhaustive_enumeration() {
        // 3 frames, 4-symbol alphabet, fixed non-degenerate posteriors.
        let stream = tiny_stream(vec![
            vec![0.5, 0.2, 0.2, 0.1],
            vec![0.1, 0.6, 0.2, 0.1],
            vec![0.25, 0.25, 0.3, 0.2],
        ]);
        let bigram = PhonemeBigram::sticky(4, 0.4);
        let d = decode_phonemes(&stream, &bigram).unwrap();
        let (bf_path, bf_score) = brute_force(&stream, &bigram);
        assert!((d.score - bf_score).abs() < 1e-9);
        assert_eq!(d.frame_states, bf_path);
    }

    #[test]
    fn noiseless_decode_collapses_to_script_sequence() {
        let a = PhonemeAlphabet::default_30();
        let script = keyword_script(&a);
        let stream = synthesize_stream(&a, &script, 0.0, 1).unwrap();
        let bigram = PhonemeBigram::uniform(a.len());
        let d = decode_phonemes(&stream, &bigram).unwrap();
        let collapsed: Vec<usize> = collapse(&d.frame_states).iter().map(|s| s.phone).collect();
        assert_eq!(collapsed, script.phoneme_sequence());
    }

    #[test]
    fn empty_stream_is_rejected() {
        let stream = tiny_stream(vec![]);
        let bigram = PhonemeBigram::uniform(4);
        assert!(matches!(decode_phonemes(&stream, &bigram), Err(WakewordError::EmptyStream)));
    }

    #[test]
    fn malformed_bigram_is_rejected() {
        let mut bigram = PhonemeBigram::uniform(4);
        bigram.transition[1][2] += 0.5;
        let stream = tiny_stream(vec![vec![0.25; 4]]);
        assert!(decode_phonemes(&stream, &bigram).is_err());
    }

    #[test]
    fn equal_scores_break_toward_lower_index() {
        // Two frames, all posteriors equal, uniform bigram: every path ties,
        // so the decoder must return [0, 0].
        let stream = tiny_stream(vec![vec![0.25; 4], vec![0.25; 4]]);
        let bigram = PhonemeBigram::uniform(4);
        let d = decode_phonemes(&stream, &bigram).unwrap();
        assert_eq!(d.frame_states, vec![0, 0]);
    }
}
