//! Stream synthesis: the closed-form emission rule.
//!
//! Per frame with true phoneme `p` and noise level `n`:
//!
//! - with probability `n * FLIP_FACTOR` the frame is *confused*: a neighbor
//!   `q` drawn from the confusion row of `p` receives `FLIP_MASS`, `p` keeps
//!   `(1 - FLIP_MASS) * RUNNER_SHARE`, and the remainder is spread over the
//!   other confusion neighbors of `p`;
//! - otherwise a leak share `u ~ U[0, 2]` is drawn and `p` receives
//!   `1 - n * SPREAD * u`, with the leak `n * SPREAD * u` spread over the
//!   confusion row of `p`.
//!
//! Expected true-phoneme mass is therefore
//! `(1 - n*FLIP_FACTOR) * (1 - n*SPREAD) + n*FLIP_FACTOR * (1-FLIP_MASS)*RUNNER_SHARE`,
//! which stays within 0.01 of `1 - n*SPREAD` for n <= 1.
//!
//! The confusion matrix is a fixed banded matrix: indices i±1 carry weight
//! 0.35 each and i±2 carry 0.15 each, renormalized at the alphabet edges. It
//! is a documented constant, not learned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AcousticStream, PhonemeAlphabet, PhonemeFrame, PhonoError, StreamTruth, UtteranceScript,
    FRAME_PERIOD_MS, KEYWORD_TOKEN,
};

/// Fraction of posterior mass leaked off the true phoneme per unit noise.
pub const SPREAD: f64 = 0.35;
/// Per-unit-noise probability that a frame is confused outright.
pub const FLIP_FACTOR: f64 = 0.02;
/// Posterior mass the winning neighbor receives on a confused frame.
pub const FLIP_MASS: f64 = 0.75;
/// Share of the residual mass the true phoneme keeps on a confused frame.
pub const RUNNER_SHARE: f64 = 0.8;

/// Banded confusion weights for offsets ±1 and ±2.
const BAND_WEIGHTS: [(isize, f64); 4] = [(-1, 0.35), (1, 0.35), (-2, 0.15), (2, 0.15)];

/// The documented emission model; one instance per alphabet size.
#[derive(Debug, Clone)]
pub struct EmissionModel {
    alphabet_size: usize,
}

impl EmissionModel {
    pub fn new(alphabet: &PhonemeAlphabet) -> Self {
        Self { alphabet_size: alphabet.len() }
    }

    /// Confusion row of `p`: neighbors and normalized weights.
    pub fn confusion_row(&self, p: usize) -> Vec<(usize, f64)> {
        let mut row = Vec::new();
        let mut total = 0.0;
        for (off, w) in BAND_WEIGHTS {
            let q = p as isize + off;
            if q >= 0 && (q as usize) < self.alphabet_size {
                row.push((q as usize, w));
                total += w;
            }
        }
        for entry in &mut row {
            entry.1 /= total;
        }
        row
    }

    fn sample_neighbor(&self, p: usize, rng: &mut ChaCha8Rng) -> usize {
        let row = self.confusion_row(p);
        let mut x: f64 = rng.gen();
        for (q, w) in &row {
            if x < *w {
                return *q;
            }
            x -= w;
        }
        row.last().expect("confusion row non-empty").0
    }

    /// Posterior vector for one frame of true phoneme `p` at noise `n`.
    pub fn emit(&self, p: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut posterior = vec![0.0; self.alphabet_size];
        let flip = rng.gen::<f64>() < noise * FLIP_FACTOR;
        if flip {
            let winner = self.sample_neighbor(p, rng);
            posterior[winner] += FLIP_MASS;
            posterior[p] += (1.0 - FLIP_MASS) * RUNNER_SHARE;
            let rest = (1.0 - FLIP_MASS) * (1.0 - RUNNER_SHARE);
            let others: Vec<(usize, f64)> =
                self.confusion_row(p).into_iter().filter(|(q, _)| *q != winner).collect();
            let total: f64 = others.iter().map(|(_, w)| w).sum();
            if total > 0.0 {
                for (q, w) in others {
                    posterior[q] += rest * w / total;
                }
            } else {
                posterior[winner] += rest;
            }
        } else {
            let u: f64 = rng.gen::<f64>() * 2.0;
            let leak = noise * SPREAD * u;
            posterior[p] += 1.0 - leak;
            for (q, w) in self.confusion_row(p) {
                posterior[q] += leak * w;
            }
        }
        posterior
    }
}

/// Closed-form expected posterior mass on the true phoneme at noise `n`.
pub fn expected_true_mass(noise: f64) -> f64 {
    (1.0 - noise * FLIP_FACTOR) * (1.0 - noise * SPREAD)
        + noise * FLIP_FACTOR * (1.0 - FLIP_MASS) * RUNNER_SHARE
}

/// Render a script into a posterior stream. Deterministic per seed.
pub fn synthesize_stream(
    alphabet: &PhonemeAlphabet,
    script: &UtteranceScript,
    noise: f64,
    seed: u64,
) -> Result<AcousticStream, PhonoError> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(PhonoError::NoiseOutOfRange(noise));
    }
    script.validate(alphabet)?;
    let model = EmissionModel::new(alphabet);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = FRAME_PERIOD_MS as u64;
    let mut frames = Vec::with_capacity(script.frame_count() as usize);
    let mut t = script.start_ms;
    for word in &script.words {
        for (&p, &dur) in word.phonemes.iter().zip(&word.durations) {
            for _ in 0..dur {
                let posterior = if noise == 0.0 {
                    let mut v = vec![0.0; alphabet.len()];
                    v[p] = 1.0;
                    v
                } else {
                    model.emit(p, noise, &mut rng)
                };
                frames.push(PhonemeFrame { t_ms: t, posterior });
                t += period;
            }
        }
    }
    let (keyword_start_ms, keyword_end_ms) = match script.word_frame_span(KEYWORD_TOKEN) {
        Some((a, b)) => {
            (Some(script.start_ms + a * period), Some(script.start_ms + b * period))
        }
        None => (None, None),
    };
    Ok(AcousticStream {
        frame_period_ms: FRAME_PERIOD_MS,
        frames,
        truth: StreamTruth { script: script.clone(), keyword_end_ms, keyword_start_ms },
    })
}
