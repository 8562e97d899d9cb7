//! Keyword spotting: three detection algorithms over posterior streams.
//!
//! All three share the same contract: given a stream and a model they return
//! a deterministic list of [`Detection`]s. Detection times are attributed to
//! the end of the matched span plus one frame of decision delay, and repeat
//! firings within [`DEBOUNCE_MS`] of the previous one are suppressed.

mod bigram;
mod hmm;
mod lm;
mod phonetic;

pub use bigram::{collapse, decode_phonemes, CollapsedSegment, DecodedSequence, PhonemeBigram};
pub use hmm::{spot_hmm, HmmState, KeywordHmm, OnlineHmmSpotter};
pub use lm::{spot_lm, TrigramLm};
pub use phonetic::{edit_distance, spot_phonetic};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phonostream::{AcousticStream, PhonemeAlphabet, WordInventory};

/// Refractory period after a detection; further firings are suppressed.
pub const DEBOUNCE_MS: u64 = 500;

/// One decision frame between the end of a matched span and the reported
/// detection time: the spotter cannot know a span closed before seeing the
/// frame after it.
pub const DECISION_DELAY_FRAMES: u64 = 1;

#[derive(Debug, Error)]
pub enum WakewordError {
    #[error("empty stream")]
    EmptyStream,
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("beam width must be >= 1, got {0}")]
    BadBeamWidth(usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Phono(#[from] crate::phonostream::PhonoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    Phonetic,
    Hmm,
    Lm,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Phonetic => write!(f, "phonetic"),
            Algorithm::Hmm => write!(f, "hmm"),
            Algorithm::Lm => write!(f, "lm"),
        }
    }
}

/// A wake-word hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub t_detect_ms: u64,
    /// Log-ratio or negated distance, depending on the algorithm.
    pub score: f64,
    pub algorithm: Algorithm,
    /// Response time from the word ending: `t_detect_ms - truth keyword
    /// end`. Attributed only to detections at or after the keyword end, so
    /// it is non-negative; a hit that commits while the keyword is still
    /// being spoken detects the stream but carries no response-time sample.
    pub latency_ms: Option<i64>,
}

impl Detection {
    pub(crate) fn new(
        t_detect_ms: u64,
        score: f64,
        algorithm: Algorithm,
        stream: &AcousticStream,
    ) -> Self {
        let latency_ms = match stream.truth.keyword_end_ms {
            Some(end) if t_detect_ms >= end => Some(t_detect_ms as i64 - end as i64),
            _ => None,
        };
        Self { t_detect_ms, score, algorithm, latency_ms }
    }
}

/// Keep only candidates at least [`DEBOUNCE_MS`] after the previous firing.
pub(crate) fn debounce(mut candidates: Vec<Detection>) -> Vec<Detection> {
    candidates.sort_by_key(|d| d.t_detect_ms);
    let mut out: Vec<Detection> = Vec::new();
    for d in candidates {
        match out.last() {
            Some(prev) if d.t_detect_ms < prev.t_detect_ms + DEBOUNCE_MS => {}
            _ => out.push(d),
        }
    }
    out
}

/// Benchmark metrics for one detector configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorMetrics {
    pub algorithm: Algorithm,
    /// Fraction of NEGATIVE and CONFUSABLE streams with at least one
    /// detection; absent when the corpus has no keyword-free streams.
    pub false_positive_rate: Option<f64>,
    /// Fraction of POSITIVE streams with no detection; absent when the
    /// corpus has no positives.
    pub false_negative_rate: Option<f64>,
    pub mean_latency_ms: Option<f64>,
    pub median_latency_ms: Option<f64>,
    pub keyword_free_streams: usize,
    pub positive_streams: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// A detector: shared models plus per-algorithm operating point.
#[derive(Debug, Clone)]
pub struct Detector {
    pub alphabet: PhonemeAlphabet,
    pub bigram: PhonemeBigram,
    pub hmm: KeywordHmm,
    pub lm: TrigramLm,
    pub keyword: Vec<crate::phonostream::PhoneId>,
    pub config: DetectorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DetectorConfig {
    Phonetic { max_distance: usize },
    Hmm { ratio_threshold: f64 },
    Lm { confidence_threshold: f64 },
}

impl DetectorConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            DetectorConfig::Phonetic { .. } => Algorithm::Phonetic,
            DetectorConfig::Hmm { .. } => Algorithm::Hmm,
            DetectorConfig::Lm { .. } => Algorithm::Lm,
        }
    }
}

impl Detector {
    /// Default models over the shared word inventory.
    pub fn from_inventory(inventory: &WordInventory, config: DetectorConfig) -> Self {
        let alphabet = inventory.alphabet.clone();
        let keyword = inventory.keyword().phonemes.clone();
        Self {
            bigram: PhonemeBigram::uniform(alphabet.len()),
            hmm: KeywordHmm::standard(&alphabet, &keyword),
            lm: TrigramLm::from_inventory(inventory),
            alphabet,
            keyword,
            config,
        }
    }

    pub fn detect(&self, stream: &AcousticStream) -> Result<Vec<Detection>, WakewordError> {
        match self.config {
            DetectorConfig::Phonetic { max_distance } => {
                spot_phonetic(stream, &self.keyword, &self.bigram, max_distance)
            }
            DetectorConfig::Hmm { ratio_threshold } => spot_hmm(stream, &self.hmm, ratio_threshold),
            DetectorConfig::Lm { confidence_threshold } => {
                spot_lm(stream, &self.lm, confidence_threshold)
            }
        }
    }
}

/// Run a detector over a corpus and aggregate metrics.
///
/// Streams are evaluated in parallel; results are order-independent by
/// construction (each stream's detections depend only on that stream).
pub fn evaluate_detector(
    detector: &Detector,
    corpus: &[AcousticStream],
) -> Result<DetectorMetrics, WakewordError> {
    if corpus.is_empty() {
        return Err(WakewordError::EmptyCorpus);
    }
    let per_stream: Vec<Vec<Detection>> = corpus
        .par_iter()
        .map(|s| detector.detect(s))
        .collect::<Result<_, _>>()?;
    Ok(summarize(detector.config.algorithm(), corpus, &per_stream))
}

/// Aggregate detections that were produced elsewhere (used by tests and the
/// harness cross-checks).
pub fn summarize(
    algorithm: Algorithm,
    corpus: &[AcousticStream],
    per_stream: &[Vec<Detection>],
) -> DetectorMetrics {
    use crate::phonostream::StreamLabel;
    let mut keyword_free = 0usize;
    let mut positives = 0usize;
    let mut fp = 0usize;
    let mut fnr = 0usize;
    let mut latencies: Vec<i64> = Vec::new();
    for (stream, dets) in corpus.iter().zip(per_stream) {
        match stream.label() {
            StreamLabel::Negative | StreamLabel::Confusable => {
                keyword_free += 1;
                if !dets.is_empty() {
                    fp += 1;
                }
            }
            StreamLabel::Positive => {
                positives += 1;
                if dets.is_empty() {
                    fnr += 1;
                } else if let Some(lat) = dets.iter().find_map(|d| d.latency_ms) {
                    latencies.push(lat);
                }
            }
        }
    }
    latencies.sort_unstable();
    let mean = if latencies.is_empty() {
        None
    } else {
        Some(latencies.iter().sum::<i64>() as f64 / latencies.len() as f64)
    };
    let median = if latencies.is_empty() {
        None
    } else {
        Some(latencies[latencies.len() / 2] as f64)
    };
    DetectorMetrics {
        algorithm,
        false_positive_rate: (keyword_free > 0).then(|| fp as f64 / keyword_free as f64),
        false_negative_rate: (positives > 0).then(|| fnr as f64 / positives as f64),
        mean_latency_ms: mean,
        median_latency_ms: median,
        keyword_free_streams: keyword_free,
        positive_streams: positives,
        false_positives: fp,
        false_negatives: fnr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonostream::{generate_corpus, CorpusSpec, StreamLabel, WordInventory};

    #[test]
    fn debounce_suppresses_hits_within_refractory() {
        let mk = |t| Detection { t_detect_ms: t, score: 0.0, algorithm: Algorithm::Phonetic, latency_ms: None };
        let out = debounce(vec![mk(0), mk(100), mk(499), mk(500), mk(1200)]);
        let times: Vec<u64> = out.iter().map(|d| d.t_detect_ms).collect();
        assert_eq!(times, vec![0, 500, 1200]);
    }

    #[test]
    fn counting_oracle_for_fp_rate() {
        // 100 negatives, a stub that fires on exactly one stream: FP = 0.01.
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 0, negatives: 100, confusables: 0 };
        let corpus = generate_corpus(&inv, &spec, 0.0, 1).unwrap();
        let mut per_stream = vec![Vec::new(); 100];
        per_stream[37] = vec![Detection {
            t_detect_ms: 0,
            score: 1.0,
            algorithm: Algorithm::Hmm,
            latency_ms: None,
        }];
        let m = summarize(Algorithm::Hmm, &corpus, &per_stream);
        assert_eq!(m.false_positive_rate, Some(0.01));
        assert_eq!(m.false_negative_rate, None);
        assert_eq!(m.mean_latency_ms, None);
    }

    #[test]
    fn all_positive_corpus_with_perfect_detector_reports_absent_fp() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 5, negatives: 0, confusables: 0 };
        let corpus = generate_corpus(&inv, &spec, 0.0, 2).unwrap();
        let per_stream: Vec<Vec<Detection>> = corpus
            .iter()
            .map(|s| {
                let end = s.truth.keyword_end_ms.unwrap();
                vec![Detection::new(end + 10, 1.0, Algorithm::Hmm, s)]
            })
            .collect();
        let m = summarize(Algorithm::Hmm, &corpus, &per_stream);
        assert_eq!(m.false_positive_rate, None);
        assert_eq!(m.false_negative_rate, Some(0.0));
        assert_eq!(m.mean_latency_ms, Some(10.0));
        assert!(corpus.iter().all(|s| s.label() == StreamLabel::Positive));
    }
}
