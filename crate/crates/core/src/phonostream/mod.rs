//! Synthetic phoneme-posterior streams.
//!
//! Real microphone audio is replaced by scripted utterances rendered into
//! per-frame probability vectors over a phoneme alphabet. The rendering is a
//! documented closed-form rule (see [`synth`]), deterministic per seed, so
//! detector behavior is reproducible bit-for-bit.

mod corpus;
mod inventory;
mod synth;

pub use corpus::{
    generate_corpus, generate_corpus_records, read_corpus, write_corpus, CorpusRecord, CorpusSpec,
    LoadedCorpus, CORPUS_FORMAT, CORPUS_VERSION, DISTANCE_ONE_MIX,
};
pub use inventory::{InventoryWord, WordInventory, WordKind};
pub use synth::{
    expected_true_mass, synthesize_stream, EmissionModel, FLIP_FACTOR, FLIP_MASS, RUNNER_SHARE,
    SPREAD,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default frame period. Millisecond latency figures are whole frames.
pub const FRAME_PERIOD_MS: u32 = 10;

/// Index into a [`PhonemeAlphabet`].
pub type PhoneId = usize;

#[derive(Debug, Error)]
pub enum PhonoError {
    #[error("noise must lie in [0,1], got {0}")]
    NoiseOutOfRange(f64),
    #[error("invalid alphabet: {0}")]
    BadAlphabet(String),
    #[error("invalid script: {0}")]
    BadScript(String),
    #[error("corpus file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered phoneme alphabet. The silence and noise symbols are always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeAlphabet {
    symbols: Vec<String>,
}

pub const SIL: &str = "SIL";
pub const NOI: &str = "NOI";

impl PhonemeAlphabet {
    /// 30 symbols: 28 speech symbols plus SIL and NOI.
    pub fn default_30() -> Self {
        let speech = [
            "a", "b", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q", "r",
            "s", "t", "u", "w", "y", "z", "sh", "th", "kh", "dh", "ay",
        ];
        let mut symbols: Vec<String> = speech.iter().map(|s| s.to_string()).collect();
        symbols.push(SIL.to_string());
        symbols.push(NOI.to_string());
        Self::new(symbols).expect("default alphabet is valid")
    }

    pub fn new(symbols: Vec<String>) -> Result<Self, PhonoError> {
        if symbols.len() < 3 {
            return Err(PhonoError::BadAlphabet(format!(
                "need at least 3 symbols, got {}",
                symbols.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in &symbols {
            if !seen.insert(s.clone()) {
                return Err(PhonoError::BadAlphabet(format!("duplicate symbol {s:?}")));
            }
        }
        for required in [SIL, NOI] {
            if !seen.contains(required) {
                return Err(PhonoError::BadAlphabet(format!("missing symbol {required:?}")));
            }
        }
        Ok(Self { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: PhoneId) -> &str {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, symbol: &str) -> Option<PhoneId> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn sil(&self) -> PhoneId {
        self.id(SIL).expect("SIL present by construction")
    }

    pub fn noi(&self) -> PhoneId {
        self.id(NOI).expect("NOI present by construction")
    }

    /// Speech symbols only (everything except SIL/NOI).
    pub fn speech_ids(&self) -> Vec<PhoneId> {
        (0..self.len()).filter(|&i| self.symbol(i) != SIL && self.symbol(i) != NOI).collect()
    }
}

/// One frame of posterior probabilities over the alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeFrame {
    pub t_ms: u64,
    pub posterior: Vec<f64>,
}

impl PhonemeFrame {
    /// Highest-posterior phoneme, ties broken by lower index.
    pub fn argmax(&self) -> PhoneId {
        let mut best = 0;
        for (i, &p) in self.posterior.iter().enumerate() {
            if p > self.posterior[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamLabel {
    /// Contains the exact keyword phoneme sequence.
    Positive,
    /// Shares no 4-phoneme subsequence with the keyword.
    Negative,
    /// Contains a near-keyword word, 1..=2 phoneme edits away.
    Confusable,
}

/// One scripted word: a token, its phoneme sequence, and per-phoneme frame
/// durations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptWord {
    pub token: String,
    pub phonemes: Vec<PhoneId>,
    pub durations: Vec<u32>,
}

pub const SILENCE_TOKEN: &str = "<sil>";

impl ScriptWord {
    pub fn new(token: impl Into<String>, phonemes: Vec<PhoneId>, durations: Vec<u32>) -> Self {
        Self { token: token.into(), phonemes, durations }
    }

    pub fn silence(frames: u32, sil_id: PhoneId) -> Self {
        Self { token: SILENCE_TOKEN.to_string(), phonemes: vec![sil_id], durations: vec![frames] }
    }

    pub fn is_silence(&self) -> bool {
        self.token == SILENCE_TOKEN
    }

    pub fn frame_count(&self) -> u64 {
        self.durations.iter().map(|&d| d as u64).sum()
    }
}

/// A scripted utterance: the ground truth behind a synthesized stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceScript {
    pub words: Vec<ScriptWord>,
    pub start_ms: u64,
    pub label: StreamLabel,
}

impl UtteranceScript {
    pub fn validate(&self, alphabet: &PhonemeAlphabet) -> Result<(), PhonoError> {
        for w in &self.words {
            if w.phonemes.len() != w.durations.len() {
                return Err(PhonoError::BadScript(format!(
                    "word {:?}: {} phonemes but {} durations",
                    w.token,
                    w.phonemes.len(),
                    w.durations.len()
                )));
            }
            for &p in &w.phonemes {
                if p >= alphabet.len() {
                    return Err(PhonoError::BadScript(format!(
                        "word {:?}: phoneme id {p} outside alphabet of {}",
                        w.token,
                        alphabet.len()
                    )));
                }
            }
            for &d in &w.durations {
                if d < 1 {
                    return Err(PhonoError::BadScript(format!(
                        "word {:?}: zero-frame phoneme duration",
                        w.token
                    )));
                }
            }
        }
        Ok(())
    }

    /// Concatenated phoneme sequence of the whole utterance.
    pub fn phoneme_sequence(&self) -> Vec<PhoneId> {
        self.words.iter().flat_map(|w| w.phonemes.iter().copied()).collect()
    }

    /// Spoken (non-silence) tokens in order.
    pub fn tokens(&self) -> Vec<String> {
        self.words.iter().filter(|w| !w.is_silence()).map(|w| w.token.clone()).collect()
    }

    pub fn frame_count(&self) -> u64 {
        self.words.iter().map(|w| w.frame_count()).sum()
    }

    /// Frame span `[start, end)` of the first word matching `token`.
    pub fn word_frame_span(&self, token: &str) -> Option<(u64, u64)> {
        let mut cursor = 0u64;
        for w in &self.words {
            let len = w.frame_count();
            if w.token == token {
                return Some((cursor, cursor + len));
            }
            cursor += len;
        }
        None
    }
}

/// Ground truth attached to a synthesized stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamTruth {
    pub script: UtteranceScript,
    /// End of the keyword's last frame, absolute ms; set for POSITIVE streams.
    pub keyword_end_ms: Option<u64>,
    /// Start of the keyword's first frame, absolute ms; set for POSITIVE streams.
    pub keyword_start_ms: Option<u64>,
}

/// A synthesized posterior stream plus its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticStream {
    pub frame_period_ms: u32,
    pub frames: Vec<PhonemeFrame>,
    pub truth: StreamTruth,
}

impl AcousticStream {
    pub fn start_ms(&self) -> u64 {
        self.frames.first().map(|f| f.t_ms).unwrap_or(0)
    }

    /// End of the final frame (exclusive).
    pub fn end_ms(&self) -> u64 {
        self.frames
            .last()
            .map(|f| f.t_ms + self.frame_period_ms as u64)
            .unwrap_or(self.start_ms())
    }

    pub fn label(&self) -> StreamLabel {
        self.truth.script.label
    }

    pub fn validate(&self, alphabet: &PhonemeAlphabet) -> Result<(), PhonoError> {
        self.truth.script.validate(alphabet)?;
        if self.frames.len() as u64 != self.truth.script.frame_count() {
            return Err(PhonoError::BadScript(format!(
                "frame count {} != scripted duration {}",
                self.frames.len(),
                self.truth.script.frame_count()
            )));
        }
        let mut prev: Option<u64> = None;
        for f in &self.frames {
            if f.posterior.len() != alphabet.len() {
                return Err(PhonoError::BadScript("posterior length != alphabet size".into()));
            }
            let mut sum = 0.0;
            for &p in &f.posterior {
                if p < 0.0 {
                    return Err(PhonoError::BadScript("negative posterior entry".into()));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(PhonoError::BadScript(format!("posterior sums to {sum}, not 1")));
            }
            if let Some(prev) = prev {
                if f.t_ms <= prev {
                    return Err(PhonoError::BadScript("frame times not strictly increasing".into()));
                }
            }
            prev = Some(f.t_ms);
        }
        if let Some(end) = self.truth.keyword_end_ms {
            if end < self.start_ms() || end > self.end_ms() {
                return Err(PhonoError::BadScript("keyword end outside stream span".into()));
            }
        }
        Ok(())
    }
}

/// Default keyword phonemization: /j a r a sh i d/, seven phonemes.
pub fn keyword_phonemes(alphabet: &PhonemeAlphabet) -> Vec<PhoneId> {
    ["j", "a", "r", "a", "sh", "i", "d"]
        .iter()
        .map(|s| alphabet.id(s).expect("keyword phoneme in alphabet"))
        .collect()
}

pub const KEYWORD_TOKEN: &str = "yarashid";

/// Default per-phoneme keyword duration used when no sampler is involved.
pub const KEYWORD_DEFAULT_DURATION: u32 = 3;

/// The canonical keyword utterance as a POSITIVE script.
pub fn keyword_script(alphabet: &PhonemeAlphabet) -> UtteranceScript {
    let phonemes = keyword_phonemes(alphabet);
    let durations = vec![KEYWORD_DEFAULT_DURATION; phonemes.len()];
    UtteranceScript {
        words: vec![ScriptWord::new(KEYWORD_TOKEN, phonemes, durations)],
        start_ms: 0,
        label: StreamLabel::Positive,
    }
}
