//! Large-vocabulary recognizer stand-in: converts ground-truth scripts to
//! transcripts through a calibrated word-error process.
//!
//! Corruption is word-level and i.i.d.: each reference word draws one error
//! with probability `wer`, split among substitution, deletion and insertion
//! by a configurable mix (default 70:20:10). The expected word error rate
//! therefore equals `wer` exactly, and the applied-edit count is the
//! empirical WER under the known alignment.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phonostream::UtteranceScript;

#[derive(Debug, Error)]
pub enum LvcsrError {
    #[error("word error rate must lie in [0,1], got {0}")]
    WerOutOfRange(f64),
    #[error("invalid vocabulary: {0}")]
    BadVocabulary(String),
    #[error("invalid error mix: {0}")]
    BadMix(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Recognizer vocabulary: tokens with intent tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub entries: Vec<(String, String)>,
}

impl Vocabulary {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self, LvcsrError> {
        let mut seen = std::collections::HashSet::new();
        for (token, _) in &entries {
            if !seen.insert(token.clone()) {
                return Err(LvcsrError::BadVocabulary(format!("duplicate token {token:?}")));
            }
        }
        Ok(Self { entries })
    }

    /// Default 500-token vocabulary: every dialog-grammar word plus generated
    /// filler words.
    pub fn default_500(grammar_words: &[String]) -> Self {
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for w in grammar_words {
            if seen.insert(w.clone()) {
                entries.push((w.clone(), "grammar".to_string()));
            }
        }
        let onsets = ["b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "r", "s", "t", "w", "z"];
        let nuclei = ["a", "e", "i", "o", "u", "ai", "ou"];
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        while entries.len() < 500 {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(onsets[rng.gen_range(0..onsets.len())]);
                w.push_str(nuclei[rng.gen_range(0..nuclei.len())]);
            }
            if seen.insert(w.clone()) {
                entries.push((w, "common".to_string()));
            }
        }
        Self { entries }
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.entries.iter().map(|(t, _)| t.as_str()).collect()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.iter().any(|(t, _)| t == token)
    }

    /// One `token<TAB>tag` line per entry.
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), LvcsrError> {
        for (token, tag) in &self.entries {
            writeln!(out, "{token}\t{tag}")?;
        }
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self, LvcsrError> {
        let mut entries = Vec::new();
        for line in BufReader::new(input).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (token, tag) = line
                .split_once('\t')
                .ok_or_else(|| LvcsrError::BadVocabulary(format!("bad line {line:?}")))?;
            entries.push((token.to_string(), tag.to_string()));
        }
        Self::new(entries)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenFlag {
    Correct,
    Substituted,
    Inserted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditKind {
    Sub,
    Del,
    Ins,
}

/// One applied corruption, recorded against the reference word position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedEdit {
    pub kind: EditKind,
    pub ref_pos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResult {
    pub tokens: Vec<String>,
    /// Per-output-token confidence in [0,1].
    pub confidences: Vec<f64>,
    /// Per-output-token origin.
    pub flags: Vec<TokenFlag>,
    /// Every corruption applied, in reference order.
    pub edits: Vec<AppliedEdit>,
    /// Reference word count the edits are measured against.
    pub reference_len: usize,
}

impl RecognitionResult {
    /// Empirical word error rate under the known alignment:
    /// (S + D + I) / reference length.
    pub fn word_error_rate(&self) -> f64 {
        if self.reference_len == 0 {
            return 0.0;
        }
        self.edits.len() as f64 / self.reference_len as f64
    }
}

/// Substitution:deletion:insertion proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMix {
    pub sub: f64,
    pub del: f64,
    pub ins: f64,
}

impl Default for ErrorMix {
    fn default() -> Self {
        Self { sub: 0.7, del: 0.2, ins: 0.1 }
    }
}

impl ErrorMix {
    pub fn substitution_only() -> Self {
        Self { sub: 1.0, del: 0.0, ins: 0.0 }
    }

    fn validate(&self) -> Result<(), LvcsrError> {
        if self.sub < 0.0 || self.del < 0.0 || self.ins < 0.0 {
            return Err(LvcsrError::BadMix("negative proportion".into()));
        }
        let sum = self.sub + self.del + self.ins;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(LvcsrError::BadMix(format!("proportions sum to {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LvcsrStub {
    pub vocabulary: Vocabulary,
    pub mix: ErrorMix,
}

impl LvcsrStub {
    pub fn new(vocabulary: Vocabulary) -> Self {
        Self { vocabulary, mix: ErrorMix::default() }
    }

    /// Corrupt a token sequence. Deterministic per seed.
    pub fn recognize_tokens(
        &self,
        reference: &[String],
        wer: f64,
        seed: u64,
    ) -> Result<RecognitionResult, LvcsrError> {
        if !(0.0..=1.0).contains(&wer) {
            return Err(LvcsrError::WerOutOfRange(wer));
        }
        self.mix.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = self.vocabulary.tokens();
        let mut tokens = Vec::with_capacity(reference.len());
        let mut confidences = Vec::with_capacity(reference.len());
        let mut flags = Vec::with_capacity(reference.len());
        let mut edits = Vec::new();

        let other_than = |rng: &mut ChaCha8Rng, not: &str| -> String {
            loop {
                let cand = vocab[rng.gen_range(0..vocab.len())];
                if cand != not || vocab.len() == 1 {
                    return cand.to_string();
                }
            }
        };

        for (pos, word) in reference.iter().enumerate() {
            if rng.gen::<f64>() < wer {
                let v: f64 = rng.gen();
                if v < self.mix.sub {
                    tokens.push(other_than(&mut rng, word));
                    confidences.push(0.30 + 0.40 * rng.gen::<f64>());
                    flags.push(TokenFlag::Substituted);
                    edits.push(AppliedEdit { kind: EditKind::Sub, ref_pos: pos });
                } else if v < self.mix.sub + self.mix.del {
                    edits.push(AppliedEdit { kind: EditKind::Del, ref_pos: pos });
                } else {
                    tokens.push(word.clone());
                    confidences.push(0.80 + 0.19 * rng.gen::<f64>());
                    flags.push(TokenFlag::Correct);
                    let extra = vocab[rng.gen_range(0..vocab.len())].to_string();
                    tokens.push(extra);
                    confidences.push(0.30 + 0.40 * rng.gen::<f64>());
                    flags.push(TokenFlag::Inserted);
                    edits.push(AppliedEdit { kind: EditKind::Ins, ref_pos: pos });
                }
            } else {
                tokens.push(word.clone());
                confidences.push(0.80 + 0.19 * rng.gen::<f64>());
                flags.push(TokenFlag::Correct);
            }
        }
        Ok(RecognitionResult { tokens, confidences, flags, edits, reference_len: reference.len() })
    }

    /// Corrupt the spoken tokens of a script.
    pub fn recognize(
        &self,
        script: &UtteranceScript,
        wer: f64,
        seed: u64,
    ) -> Result<RecognitionResult, LvcsrError> {
        self.recognize_tokens(&script.tokens(), wer, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wakeword::edit_distance;

    fn stub() -> LvcsrStub {
        LvcsrStub::new(Vocabulary::default_500(&["book".into(), "appointment".into()]))
    }

    fn words(n: usize, seed: u64) -> Vec<String> {
        let s = stub();
        let vocab = s.vocabulary.tokens();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect()
    }

    #[test]
    fn default_vocabulary_has_500_unique_tokens() {
        let s = stub();
        assert_eq!(s.vocabulary.entries.len(), 500);
        assert!(s.vocabulary.contains("book"));
        assert!(s.vocabulary.contains("appointment"));
    }

    #[test]
    fn zero_wer_reproduces_reference_exactly() {
        let s = stub();
        let reference = words(50, 3);
        let r = s.recognize_tokens(&reference, 0.0, 9).unwrap();
        assert_eq!(r.tokens, reference);
        assert!(r.edits.is_empty());
        assert!(r.flags.iter().all(|f| *f == TokenFlag::Correct));
        assert!(r.confidences.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn full_wer_substitution_only_matches_nothing_positionally() {
        let mut s = stub();
        s.mix = ErrorMix::substitution_only();
        let reference = words(200, 5);
        let r = s.recognize_tokens(&reference, 1.0, 11).unwrap();
        assert_eq!(r.tokens.len(), reference.len());
        assert!(r.tokens.iter().zip(&reference).all(|(a, b)| a != b));
        assert_eq!(r.word_error_rate(), 1.0);
    }

    #[test]
    fn rejects_wer_outside_unit_interval() {
        let s = stub();
        assert!(matches!(
            s.recognize_tokens(&words(3, 1), 1.2, 0),
            Err(LvcsrError::WerOutOfRange(_))
        ));
        assert!(s.recognize_tokens(&words(3, 1), -0.2, 0).is_err());
    }

    #[test]
    fn empirical_wer_tracks_configured_wer_at_scale() {
        let s = stub();
        let reference = words(100_000, 17);
        let r = s.recognize_tokens(&reference, 0.06, 1).unwrap();
        let wer = r.word_error_rate();
        assert!((0.055..=0.065).contains(&wer), "empirical wer {wer}");
    }

    #[test]
    fn different_seeds_decorrelate_error_positions() {
        let s = stub();
        let reference = words(2000, 23);
        let a = s.recognize_tokens(&reference, 0.2, 1).unwrap();
        let b = s.recognize_tokens(&reference, 0.2, 2).unwrap();
        assert_ne!(a.edits, b.edits);
        // same seed is bit-identical
        let c = s.recognize_tokens(&reference, 0.2, 1).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn applied_edits_agree_with_alignment_distance_on_small_samples() {
        let s = stub();
        for seed in 0..50 {
            let reference = words(40, seed + 100);
            let r = s.recognize_tokens(&reference, 0.15, seed).unwrap();
            let d = edit_distance(&r.tokens, &reference);
            // The true alignment can only be cheaper than the applied edits.
            assert!(d <= r.edits.len(), "alignment {d} vs applied {}", r.edits.len());
        }
    }

    #[test]
    fn vocabulary_roundtrips_through_tsv() {
        let s = stub();
        let mut buf = Vec::new();
        s.vocabulary.save(&mut buf).unwrap();
        let loaded = Vocabulary::load(buf.as_slice()).unwrap();
        assert_eq!(loaded, s.vocabulary);
    }
}
