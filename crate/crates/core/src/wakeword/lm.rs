//! Language-model keyword spotting: full token decoding of the stream over a
//! small vocabulary with 3-gram scoring.
//!
//! The front end is the shared phoneme decoder (uniform transitions); its
//! run-length-collapsed output is segmented into lexicon tokens by a beam
//! search. A token may absorb up to two phoneme edits at a fixed acoustic
//! cost; silence segments are consumed for free; a garbage token of last
//! resort keeps every stream parseable.
//!
//! A detection requires the keyword token in the 1-best hypothesis *and* a
//! background-normalized confidence: the 1-best score minus the best
//! keyword-free hypothesis score over the same stream.

use serde::{Deserialize, Serialize};

use super::bigram::{collapse, decode_phonemes, PhonemeBigram};
use super::{debounce, Algorithm, Detection, WakewordError, DECISION_DELAY_FRAMES};
use crate::phonostream::{AcousticStream, PhoneId, WordInventory, WordKind};

/// Acoustic cost of one substituted phoneme inside a token match.
const SUB_COST: f64 = 4.0;
/// Acoustic cost of one inserted or deleted phoneme.
const INDEL_COST: f64 = 3.0;
/// Maximum phoneme edits a single token match may absorb.
const MAX_EDITS: usize = 2;
/// Per-segment cost of the garbage token.
const UNK_COST: f64 = 6.0;
/// Language-model probability assigned to the garbage token.
const UNK_PROB: f64 = 1e-4;
/// Weight of the language-model term relative to the acoustic term.
const LM_WEIGHT: f64 = 1.0;

/// History sentinel for utterance start and garbage tokens.
const NO_TOKEN: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigramLm {
    pub vocab: Vec<String>,
    /// Phoneme sequence per vocabulary token.
    pub lexicon: Vec<Vec<PhoneId>>,
    /// Index of the wake-word token in `vocab`.
    pub keyword_token: usize,
    /// Unigram probabilities, one per token, summing to 1.
    pub unigram: Vec<f64>,
    /// Explicit bigram probabilities `(h, w, p)`; absent pairs back off.
    pub bigrams: Vec<(usize, usize, f64)>,
    /// Explicit trigram probabilities `(h1, h2, w, p)`.
    pub trigrams: Vec<(usize, usize, usize, f64)>,
    /// Beam width of the token search.
    pub beam_width: usize,
    /// Phoneme consumed silently between tokens.
    pub sil: PhoneId,
}

impl TrigramLm {
    /// Default model over the shared 50-word inventory: near-uniform
    /// unigrams with a mild boost for the keyword, pure backoff above that.
    pub fn from_inventory(inventory: &WordInventory) -> Self {
        let vocab = inventory.tokens();
        let lexicon: Vec<Vec<PhoneId>> =
            inventory.words.iter().map(|w| w.phonemes.clone()).collect();
        let keyword_token = inventory
            .words
            .iter()
            .position(|w| w.kind == WordKind::Keyword)
            .expect("inventory has a keyword");
        let confusable_count =
            inventory.words.iter().filter(|w| matches!(w.kind, WordKind::Confusable { .. })).count();
        let filler_count =
            inventory.words.iter().filter(|w| w.kind == WordKind::Filler).count();
        let keyword_p = 0.04;
        let confusable_p = 0.012;
        let filler_p =
            (1.0 - keyword_p - confusable_p * confusable_count as f64) / filler_count as f64;
        let unigram = inventory
            .words
            .iter()
            .map(|w| match w.kind {
                WordKind::Keyword => keyword_p,
                WordKind::Confusable { .. } => confusable_p,
                WordKind::Filler => filler_p,
            })
            .collect();
        Self {
            vocab,
            lexicon,
            keyword_token,
            unigram,
            bigrams: Vec::new(),
            trigrams: Vec::new(),
            beam_width: 8,
            sil: inventory.alphabet.sil(),
        }
    }

    fn explicit_bigram(&self, h: usize, w: usize) -> Option<f64> {
        self.bigrams.iter().find(|(a, b, _)| *a == h && *b == w).map(|(_, _, p)| *p)
    }

    fn explicit_trigram(&self, h1: usize, h2: usize, w: usize) -> Option<f64> {
        self.trigrams
            .iter()
            .find(|(a, b, c, _)| *a == h1 && *b == h2 && *c == w)
            .map(|(_, _, _, p)| *p)
    }

    /// Backoff weight for the bigram level of history `h`.
    fn bigram_alpha(&self, h: usize) -> f64 {
        let explicit: Vec<usize> =
            self.bigrams.iter().filter(|(a, _, _)| *a == h).map(|(_, b, _)| *b).collect();
        if explicit.is_empty() {
            return 1.0;
        }
        let covered_p: f64 =
            self.bigrams.iter().filter(|(a, _, _)| *a == h).map(|(_, _, p)| *p).sum();
        let covered_uni: f64 = explicit.iter().map(|&w| self.unigram[w]).sum();
        (1.0 - covered_p) / (1.0 - covered_uni)
    }

    fn trigram_alpha(&self, h1: usize, h2: usize) -> f64 {
        let explicit: Vec<usize> = self
            .trigrams
            .iter()
            .filter(|(a, b, _, _)| *a == h1 && *b == h2)
            .map(|(_, _, c, _)| *c)
            .collect();
        if explicit.is_empty() {
            return 1.0;
        }
        let covered_p: f64 = self
            .trigrams
            .iter()
            .filter(|(a, b, _, _)| *a == h1 && *b == h2)
            .map(|(_, _, _, p)| *p)
            .sum();
        let covered_lower: f64 = explicit.iter().map(|&w| self.word_prob_bigram(h2, w)).sum();
        (1.0 - covered_p) / (1.0 - covered_lower)
    }

    fn word_prob_bigram(&self, h: usize, w: usize) -> f64 {
        if h == NO_TOKEN {
            return self.unigram[w];
        }
        match self.explicit_bigram(h, w) {
            Some(p) => p,
            None => self.bigram_alpha(h) * self.unigram[w],
        }
    }

    /// Conditional probability with backoff: trigram -> bigram -> unigram.
    pub fn word_prob(&self, h1: usize, h2: usize, w: usize) -> f64 {
        if h1 == NO_TOKEN || h2 == NO_TOKEN {
            return self.word_prob_bigram(h2, w);
        }
        match self.explicit_trigram(h1, h2, w) {
            Some(p) => p,
            None => self.trigram_alpha(h1, h2) * self.word_prob_bigram(h2, w),
        }
    }

    pub fn validate(&self) -> Result<(), WakewordError> {
        let v = self.vocab.len();
        if v == 0 || self.lexicon.len() != v || self.unigram.len() != v {
            return Err(WakewordError::MalformedModel("vocab/lexicon/unigram size mismatch".into()));
        }
        if self.keyword_token >= v {
            return Err(WakewordError::MalformedModel("keyword token outside vocabulary".into()));
        }
        if self.lexicon.iter().any(|l| l.is_empty()) {
            return Err(WakewordError::MalformedModel("empty lexicon entry".into()));
        }
        let uni: f64 = self.unigram.iter().sum();
        if (uni - 1.0).abs() > 1e-6 {
            return Err(WakewordError::MalformedModel(format!("unigram sums to {uni}")));
        }
        // every conditional distribution must normalize after backoff
        let mut contexts: Vec<usize> = self.bigrams.iter().map(|(h, _, _)| *h).collect();
        contexts.sort_unstable();
        contexts.dedup();
        for h in contexts {
            let total: f64 = (0..v).map(|w| self.word_prob_bigram(h, w)).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(WakewordError::MalformedModel(format!(
                    "bigram context {h} normalizes to {total}"
                )));
            }
        }
        let mut tri_contexts: Vec<(usize, usize)> =
            self.trigrams.iter().map(|(a, b, _, _)| (*a, *b)).collect();
        tri_contexts.sort_unstable();
        tri_contexts.dedup();
        for (h1, h2) in tri_contexts {
            let total: f64 = (0..v).map(|w| self.word_prob(h1, h2, w)).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(WakewordError::MalformedModel(format!(
                    "trigram context ({h1},{h2}) normalizes to {total}"
                )));
            }
        }
        Ok(())
    }
}

/// One non-silence collapsed segment with its frame span.
#[derive(Debug, Clone, Copy)]
struct Unit {
    phone: PhoneId,
    last_frame: usize,
}

/// Token alignment candidates at one start position: (token, units consumed,
/// acoustic cost).
type AlignmentTable = Vec<Vec<(usize, usize, f64)>>;

/// Weighted edit costs of matching `word` against every prefix of `units`,
/// gated at [`MAX_EDITS`] edits. Returns (consumed, cost) pairs.
fn align_prefixes(word: &[PhoneId], units: &[Unit], max_consume: usize) -> Vec<(usize, f64)> {
    let l = word.len();
    let kmax = max_consume.min(l + MAX_EDITS);
    // dp[i][k]: (edits, cost) of aligning word[..i] to units[..k]
    let inf = (usize::MAX / 2, f64::INFINITY);
    let mut dp = vec![vec![inf; kmax + 1]; l + 1];
    dp[0][0] = (0, 0.0);
    for i in 0..=l {
        for k in 0..=kmax {
            let (e, c) = dp[i][k];
            if e > MAX_EDITS {
                continue;
            }
            // consume one unit
            if i < l && k < kmax {
                let hit = word[i] == units[k].phone;
                let (de, dc) = if hit { (0, 0.0) } else { (1, SUB_COST) };
                let cand = (e + de, c + dc);
                if cand < dp[i + 1][k + 1] {
                    dp[i + 1][k + 1] = cand;
                }
            }
            // skip a word phoneme (deletion)
            if i < l {
                let cand = (e + 1, c + INDEL_COST);
                if cand < dp[i + 1][k] {
                    dp[i + 1][k] = cand;
                }
            }
            // absorb an extra unit (insertion)
            if k < kmax {
                let cand = (e + 1, c + INDEL_COST);
                if cand < dp[i][k + 1] {
                    dp[i][k + 1] = cand;
                }
            }
        }
    }
    (1..=kmax)
        .filter_map(|k| {
            let (e, c) = dp[l][k];
            (e <= MAX_EDITS).then_some((k, c))
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Hypothesis {
    score: f64,
    h1: usize,
    h2: usize,
    /// (token index or NO_TOKEN for garbage, first unit, one-past-last unit)
    tokens: Vec<(usize, usize, usize)>,
}

struct DecodeOutcome {
    best: Option<Hypothesis>,
}

fn beam_decode(
    lm: &TrigramLm,
    units: &[Unit],
    alignments: &AlignmentTable,
    allow_keyword: bool,
) -> DecodeOutcome {
    let n = units.len();
    let mut layers: Vec<Vec<Hypothesis>> = vec![Vec::new(); n + 1];
    layers[0].push(Hypothesis { score: 0.0, h1: NO_TOKEN, h2: NO_TOKEN, tokens: Vec::new() });
    for pos in 0..n {
        if layers[pos].is_empty() {
            continue;
        }
        // prune to beam
        layers[pos].sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));
        layers[pos].truncate(lm.beam_width);
        let hyps = layers[pos].clone();
        for hyp in &hyps {
            for &(w, k, cost) in &alignments[pos] {
                if !allow_keyword && w == lm.keyword_token {
                    continue;
                }
                let lm_term = LM_WEIGHT * lm.word_prob(hyp.h1, hyp.h2, w).ln();
                let mut tokens = hyp.tokens.clone();
                tokens.push((w, pos, pos + k));
                layers[pos + k].push(Hypothesis {
                    score: hyp.score - cost + lm_term,
                    h1: hyp.h2,
                    h2: w,
                    tokens,
                });
            }
            // garbage token of last resort: consume one unit
            let mut tokens = hyp.tokens.clone();
            tokens.push((NO_TOKEN, pos, pos + 1));
            layers[pos + 1].push(Hypothesis {
                score: hyp.score - UNK_COST + LM_WEIGHT * UNK_PROB.ln(),
                h1: hyp.h2,
                h2: NO_TOKEN,
                tokens,
            });
        }
    }
    let best = layers[n]
        .iter()
        .max_by(|a, b| a.score.partial_cmp(&b.score).expect("finite scores"))
        .cloned();
    DecodeOutcome { best }
}

/// Beam-searched token decoding with 3-gram scoring; fires when the keyword
/// token appears in the 1-best hypothesis with enough background-normalized
/// confidence.
pub fn spot_lm(
    stream: &AcousticStream,
    lm: &TrigramLm,
    confidence_threshold: f64,
) -> Result<Vec<Detection>, WakewordError> {
    if lm.beam_width < 1 {
        return Err(WakewordError::BadBeamWidth(lm.beam_width));
    }
    lm.validate()?;
    let n_phones = stream
        .frames
        .first()
        .map(|f| f.posterior.len())
        .ok_or(WakewordError::EmptyStream)?;
    let decoded = decode_phonemes(stream, &PhonemeBigram::uniform(n_phones))?;
    let units: Vec<Unit> = collapse(&decoded.frame_states)
        .into_iter()
        .filter(|seg| seg.phone != lm.sil)
        .map(|seg| Unit { phone: seg.phone, last_frame: seg.last_frame })
        .collect();
    if units.is_empty() {
        return Ok(Vec::new());
    }

    // alignment candidates are hypothesis-independent; compute once
    let alignments: AlignmentTable = (0..units.len())
        .map(|pos| {
            let remaining = units.len() - pos;
            let mut out = Vec::new();
            for (w, word) in lm.lexicon.iter().enumerate() {
                for (k, cost) in align_prefixes(word, &units[pos..], remaining) {
                    out.push((w, k, cost));
                }
            }
            out
        })
        .collect();

    let with_kw = beam_decode(lm, &units, &alignments, true);
    let best = match with_kw.best {
        Some(h) => h,
        None => return Ok(Vec::new()),
    };
    let keyword_spans: Vec<(usize, usize)> = best
        .tokens
        .iter()
        .filter(|(w, _, _)| *w == lm.keyword_token)
        .map(|(_, a, b)| (*a, *b))
        .collect();
    if keyword_spans.is_empty() {
        return Ok(Vec::new());
    }
    let without_kw = beam_decode(lm, &units, &alignments, false);
    let background = without_kw.best.map(|h| h.score).unwrap_or(f64::NEG_INFINITY);
    let confidence = best.score - background;
    if confidence < confidence_threshold {
        return Ok(Vec::new());
    }

    let period = stream.frame_period_ms as u64;
    let stream_end = stream.end_ms();
    let candidates = keyword_spans
        .into_iter()
        .map(|(_, b)| {
            let span_end = stream.frames[units[b - 1].last_frame].t_ms + period;
            let t_detect = (span_end + DECISION_DELAY_FRAMES * period).min(stream_end);
            Detection::new(t_detect, confidence, Algorithm::Lm, stream)
        })
        .collect();
    Ok(debounce(candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonostream::{
        generate_corpus, CorpusSpec, ScriptWord, StreamLabel, UtteranceScript,
        WordInventory,
    };

    fn inventory() -> WordInventory {
        WordInventory::default_50()
    }

    #[test]
    fn default_lm_validates() {
        let lm = TrigramLm::from_inventory(&inventory());
        lm.validate().unwrap();
    }

    #[test]
    fn rejects_beam_width_below_one() {
        let inv = inventory();
        let mut lm = TrigramLm::from_inventory(&inv);
        lm.beam_width = 0;
        let spec = CorpusSpec { positives: 1, negatives: 0, confusables: 0 };
        let stream = &generate_corpus(&inv, &spec, 0.0, 1).unwrap()[0];
        assert!(matches!(spot_lm(stream, &lm, 0.0), Err(WakewordError::BadBeamWidth(0))));
    }

    #[test]
    fn backoff_distributions_normalize_with_explicit_entries() {
        let inv = inventory();
        let mut lm = TrigramLm::from_inventory(&inv);
        lm.bigrams.push((0, 1, 0.5));
        lm.bigrams.push((0, 2, 0.2));
        lm.trigrams.push((3, 0, 1, 0.4));
        lm.validate().unwrap();
        let v = lm.vocab.len();
        let total: f64 = (0..v).map(|w| lm.word_prob(3, 0, w)).sum();
        assert!((total - 1.0).abs() < 1e-9, "normalizes to {total}");
    }

    #[test]
    fn misnormalized_lm_is_rejected() {
        let inv = inventory();
        let mut lm = TrigramLm::from_inventory(&inv);
        lm.unigram[0] += 0.3;
        assert!(lm.validate().is_err());
    }

    #[test]
    fn clean_positive_fires_once_with_positive_confidence() {
        let inv = inventory();
        let lm = TrigramLm::from_inventory(&inv);
        let spec = CorpusSpec { positives: 5, negatives: 0, confusables: 0 };
        for stream in &generate_corpus(&inv, &spec, 0.0, 13).unwrap() {
            let dets = spot_lm(stream, &lm, 0.0).unwrap();
            assert_eq!(dets.len(), 1);
            assert!(dets[0].score > 0.0, "confidence {}", dets[0].score);
            assert!(dets[0].latency_ms.unwrap() >= 0);
        }
    }

    #[test]
    fn clean_negative_in_vocabulary_words_never_fire() {
        let inv = inventory();
        let lm = TrigramLm::from_inventory(&inv);
        let spec = CorpusSpec { positives: 0, negatives: 20, confusables: 0 };
        for stream in &generate_corpus(&inv, &spec, 0.0, 14).unwrap() {
            assert!(spot_lm(stream, &lm, 0.0).unwrap().is_empty());
        }
    }

    #[test]
    fn clean_confusables_lose_to_their_own_token() {
        let inv = inventory();
        let lm = TrigramLm::from_inventory(&inv);
        let spec = CorpusSpec { positives: 0, negatives: 0, confusables: 30 };
        for stream in &generate_corpus(&inv, &spec, 0.0, 15).unwrap() {
            assert!(spot_lm(stream, &lm, 0.0).unwrap().is_empty());
        }
    }

    #[test]
    fn lowering_confidence_threshold_never_loses_detections() {
        let inv = inventory();
        let lm = TrigramLm::from_inventory(&inv);
        let spec = CorpusSpec { positives: 5, negatives: 0, confusables: 5 };
        for stream in &generate_corpus(&inv, &spec, 0.5, 16).unwrap() {
            let mut prev = 0;
            for thr in [10.0, 5.0, 2.0, 0.0, -5.0] {
                let n = spot_lm(stream, &lm, thr).unwrap().len();
                assert!(n >= prev);
                prev = n;
            }
        }
    }

    /// Exhaustive token-sequence decoding over a tiny vocabulary: the
    /// independent oracle for the beam search.
    fn exhaustive_best(
        lm: &TrigramLm,
        units: &[super::Unit],
        pos: usize,
        h1: usize,
        h2: usize,
    ) -> f64 {
        if pos == units.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for (w, word) in lm.lexicon.iter().enumerate() {
            for (k, cost) in super::align_prefixes(word, &units[pos..], units.len() - pos) {
                let lm_term = LM_WEIGHT * lm.word_prob(h1, h2, w).ln();
                let rest = exhaustive_best(lm, units, pos + k, h2, w);
                best = best.max(-cost + lm_term + rest);
            }
        }
        let unk = -UNK_COST + LM_WEIGHT * UNK_PROB.ln()
            + exhaustive_best(lm, units, pos + 1, h2, NO_TOKEN);
        best.max(unk)
    }

    #[test]
    fn wide_beam_matches_exhaustive_decoding_on_five_word_vocabulary() {
        let inv = inventory();
        let a = &inv.alphabet;
        // five words: keyword plus four fillers
        let fillers: Vec<_> = inv.fillers().into_iter().take(4).collect();
        let mut vocab = vec![inv.keyword().token.clone()];
        let mut lexicon = vec![inv.keyword().phonemes.clone()];
        for f in &fillers {
            vocab.push(f.token.clone());
            lexicon.push(f.phonemes.clone());
        }
        let lm = TrigramLm {
            vocab,
            lexicon,
            keyword_token: 0,
            unigram: vec![0.2; 5],
            bigrams: vec![],
            trigrams: vec![],
            beam_width: 1000,
            sil: a.sil(),
        };
        lm.validate().unwrap();

        // a positive utterance from those words, mildly noisy
        let words = vec![
            ScriptWord::new(fillers[0].token.clone(), fillers[0].phonemes.clone(), vec![2; fillers[0].phonemes.len()]),
            ScriptWord::new(inv.keyword().token.clone(), inv.keyword().phonemes.clone(), vec![2; 7]),
            ScriptWord::new(fillers[1].token.clone(), fillers[1].phonemes.clone(), vec![2; fillers[1].phonemes.len()]),
        ];
        let script = UtteranceScript { words, start_ms: 0, label: StreamLabel::Positive };
        let stream = crate::phonostream::synthesize_stream(a, &script, 0.3, 4).unwrap();

        let decoded =
            decode_phonemes(&stream, &PhonemeBigram::uniform(a.len())).unwrap();
        let units: Vec<super::Unit> = collapse(&decoded.frame_states)
            .into_iter()
            .filter(|seg| seg.phone != lm.sil)
            .map(|seg| super::Unit { phone: seg.phone, last_frame: seg.last_frame })
            .collect();
        let alignments: super::AlignmentTable = (0..units.len())
            .map(|pos| {
                let remaining = units.len() - pos;
                let mut out = Vec::new();
                for (w, word) in lm.lexicon.iter().enumerate() {
                    for (k, cost) in super::align_prefixes(word, &units[pos..], remaining) {
                        out.push((w, k, cost));
                    }
                }
                out
            })
            .collect();
        let beam = super::beam_decode(&lm, &units, &alignments, true);
        let oracle = exhaustive_best(&lm, &units, 0, NO_TOKEN, NO_TOKEN);
        let beam_score = beam.best.expect("decodable").score;
        assert!(
            (beam_score - oracle).abs() < 1e-9,
            "beam {beam_score} vs exhaustive {oracle}"
        );

        // and the spotter fires on it
        let dets = spot_lm(&stream, &lm, 0.0).unwrap();
        assert_eq!(dets.len(), 1);
        assert!(dets[0].score > 0.0);
    }
}
