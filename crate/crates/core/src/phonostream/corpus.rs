//! Labeled corpus generation and serialization.
//!
//! A corpus file is line-delimited JSON: one header line followed by one
//! record per stream. Records carry the generating script and per-stream
//! seed; loading re-synthesizes the frames, which is bit-identical to the
//! original stream because synthesis is deterministic.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::inventory::{four_grams, shares_gram, WordInventory};
use super::synth::synthesize_stream;
use super::{
    AcousticStream, PhonemeAlphabet, PhonoError, ScriptWord, StreamLabel, UtteranceScript,
};

pub const CORPUS_FORMAT: &str = "duobot-corpus";
pub const CORPUS_VERSION: u32 = 1;

/// Fraction of confusable streams built from a distance-1 pseudo-word; the
/// rest use distance-2 entries. Part of the declared benchmark mix.
pub const DISTANCE_ONE_MIX: f64 = 0.14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub positives: usize,
    pub negatives: usize,
    pub confusables: usize,
}

impl CorpusSpec {
    pub fn total(&self) -> usize {
        self.positives + self.negatives + self.confusables
    }
}

/// One corpus entry: the script plus the seed its frames are rendered with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub script: UtteranceScript,
    pub stream_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    format: String,
    version: u32,
    noise: f64,
    seed: u64,
    alphabet: Vec<String>,
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct ScriptBuilder<'a> {
    inventory: &'a WordInventory,
    rng: ChaCha8Rng,
}

impl<'a> ScriptBuilder<'a> {
    fn new(inventory: &'a WordInventory, seed: u64) -> Self {
        Self { inventory, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn durations(&mut self, n: usize) -> Vec<u32> {
        (0..n).map(|_| self.rng.gen_range(1..=4)).collect()
    }

    fn filler_word(&mut self) -> ScriptWord {
        let fillers = self.inventory.fillers();
        let w = fillers[self.rng.gen_range(0..fillers.len())];
        let durations = self.durations(w.phonemes.len());
        ScriptWord::new(w.token.clone(), w.phonemes.clone(), durations)
    }

    fn assemble(&mut self, spoken: Vec<ScriptWord>, label: StreamLabel) -> UtteranceScript {
        let sil = self.inventory.alphabet.sil();
        let mut words = Vec::with_capacity(spoken.len() * 2 + 2);
        words.push(ScriptWord::silence(self.rng.gen_range(2..=5), sil));
        let n = spoken.len();
        for (i, w) in spoken.into_iter().enumerate() {
            words.push(w);
            if i + 1 < n && self.rng.gen::<f64>() < 0.3 {
                words.push(ScriptWord::silence(self.rng.gen_range(1..=2), sil));
            }
        }
        words.push(ScriptWord::silence(self.rng.gen_range(2..=4), sil));
        UtteranceScript { words, start_ms: 0, label }
    }

    fn build(&mut self, label: StreamLabel) -> UtteranceScript {
        let keyword = self.inventory.keyword();
        let keyword_grams_owned = keyword.phonemes.clone();
        let keyword_grams = four_grams(&keyword_grams_owned);
        loop {
            let carrier_count = self.rng.gen_range(3..=6);
            let mut spoken: Vec<ScriptWord> =
                (0..carrier_count).map(|_| self.filler_word()).collect();
            match label {
                StreamLabel::Positive => {
                    let pos = self.rng.gen_range(0..=spoken.len());
                    let durations = self.durations(keyword.phonemes.len());
                    spoken.insert(
                        pos,
                        ScriptWord::new(keyword.token.clone(), keyword.phonemes.clone(), durations),
                    );
                }
                StreamLabel::Confusable => {
                    let distance = if self.rng.gen::<f64>() < DISTANCE_ONE_MIX { 1 } else { 2 };
                    let choices = self.inventory.confusables(distance);
                    let w = choices[self.rng.gen_range(0..choices.len())];
                    let pos = self.rng.gen_range(0..=spoken.len());
                    let durations = self.durations(w.phonemes.len());
                    spoken.insert(pos, ScriptWord::new(w.token.clone(), w.phonemes.clone(), durations));
                }
                StreamLabel::Negative => {}
            }
            let script = self.assemble(spoken, label);
            if label == StreamLabel::Negative {
                // Individual fillers are clean; cross-word boundaries can still
                // form a shared 4-gram, so check the whole sequence.
                let seq = script.phoneme_sequence();
                if shares_gram(&seq, &keyword_grams) {
                    continue;
                }
            }
            return script;
        }
    }
}

/// Generate the scripts and per-stream seeds for a corpus. Streams come out
/// ordered positives, negatives, confusables.
pub fn generate_corpus_records(
    inventory: &WordInventory,
    spec: &CorpusSpec,
    seed: u64,
) -> Vec<CorpusRecord> {
    let mut records = Vec::with_capacity(spec.total());
    let labels = [
        (StreamLabel::Positive, spec.positives),
        (StreamLabel::Negative, spec.negatives),
        (StreamLabel::Confusable, spec.confusables),
    ];
    let mut index = 0u64;
    for (label, count) in labels {
        for _ in 0..count {
            let stream_seed = mix_seed(seed, index);
            let mut builder = ScriptBuilder::new(inventory, stream_seed);
            let script = builder.build(label);
            records.push(CorpusRecord { script, stream_seed: mix_seed(stream_seed, 1) });
            index += 1;
        }
    }
    records
}

/// Generate a labeled corpus of synthesized streams.
pub fn generate_corpus(
    inventory: &WordInventory,
    spec: &CorpusSpec,
    noise: f64,
    seed: u64,
) -> Result<Vec<AcousticStream>, PhonoError> {
    let records = generate_corpus_records(inventory, spec, seed);
    records
        .iter()
        .map(|r| synthesize_stream(&inventory.alphabet, &r.script, noise, r.stream_seed))
        .collect()
}

pub fn write_corpus<W: Write>(
    mut out: W,
    alphabet: &PhonemeAlphabet,
    noise: f64,
    seed: u64,
    records: &[CorpusRecord],
) -> Result<(), PhonoError> {
    let header = CorpusHeader {
        format: CORPUS_FORMAT.to_string(),
        version: CORPUS_VERSION,
        noise,
        seed,
        alphabet: alphabet.symbols().to_vec(),
    };
    serde_json::to_writer(&mut out, &header).map_err(|e| PhonoError::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| PhonoError::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub struct LoadedCorpus {
    pub alphabet: PhonemeAlphabet,
    pub noise: f64,
    pub seed: u64,
    pub records: Vec<CorpusRecord>,
}

impl LoadedCorpus {
    pub fn streams(&self) -> Result<Vec<AcousticStream>, PhonoError> {
        self.records
            .iter()
            .map(|r| synthesize_stream(&self.alphabet, &r.script, self.noise, r.stream_seed))
            .collect()
    }
}

pub fn read_corpus<R: Read>(input: R) -> Result<LoadedCorpus, PhonoError> {
    let mut lines = BufReader::new(input).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| PhonoError::Format("empty corpus file".into()))??;
    let header: CorpusHeader = serde_json::from_str(&header_line)
        .map_err(|e| PhonoError::Format(format!("bad header: {e}")))?;
    if header.format != CORPUS_FORMAT {
        return Err(PhonoError::Format(format!("unknown format {:?}", header.format)));
    }
    if header.version != CORPUS_VERSION {
        return Err(PhonoError::Format(format!("unsupported version {}", header.version)));
    }
    let alphabet = PhonemeAlphabet::new(header.alphabet)
        .map_err(|e| PhonoError::Format(format!("bad alphabet in header: {e}")))?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| PhonoError::Format(format!("bad record: {e}")))?;
        records.push(record);
    }
    Ok(LoadedCorpus { alphabet, noise: header.noise, seed: header.seed, records })
}

#[cfg(test)]
mod tests {
    use super::super::inventory::levenshtein;
    use super::*;

    #[test]
    fn empty_spec_gives_empty_corpus() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 0, negatives: 0, confusables: 0 };
        let corpus = generate_corpus(&inv, &spec, 0.2, 1).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn label_histogram_matches_spec() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 10, negatives: 10, confusables: 10 };
        let corpus = generate_corpus(&inv, &spec, 0.2, 7).unwrap();
        assert_eq!(corpus.len(), 30);
        let count = |l: StreamLabel| corpus.iter().filter(|s| s.label() == l).count();
        assert_eq!(count(StreamLabel::Positive), 10);
        assert_eq!(count(StreamLabel::Negative), 10);
        assert_eq!(count(StreamLabel::Confusable), 10);
        for s in &corpus {
            s.validate(&inv.alphabet).unwrap();
        }
    }

    #[test]
    fn positives_contain_keyword_contiguously_and_truth_is_marked() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 20, negatives: 0, confusables: 0 };
        let keyword = inv.keyword().phonemes.clone();
        for s in generate_corpus(&inv, &spec, 0.3, 3).unwrap() {
            let seq = s.truth.script.phoneme_sequence();
            assert!(seq.windows(keyword.len()).any(|w| w == keyword.as_slice()));
            let end = s.truth.keyword_end_ms.expect("positive stream has keyword end");
            assert!(end > s.start_ms() && end <= s.end_ms());
        }
    }

    #[test]
    fn negatives_share_no_keyword_four_gram() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 0, negatives: 50, confusables: 0 };
        let keyword = inv.keyword().phonemes.clone();
        let grams = four_grams(&keyword);
        for s in generate_corpus(&inv, &spec, 0.2, 11).unwrap() {
            assert!(!shares_gram(&s.truth.script.phoneme_sequence(), &grams));
            assert!(s.truth.keyword_end_ms.is_none());
        }
    }

    #[test]
    fn confusable_scripts_sit_one_or_two_edits_from_keyword() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 0, negatives: 0, confusables: 50 };
        let keyword = inv.keyword().phonemes.clone();
        for s in generate_corpus(&inv, &spec, 0.2, 5).unwrap() {
            let word = s
                .truth
                .script
                .words
                .iter()
                .find(|w| inv.find(&w.token).map(|iw| matches!(iw.kind, super::super::inventory::WordKind::Confusable { .. })).unwrap_or(false))
                .expect("confusable stream embeds a confusable word");
            let d = levenshtein(&word.phonemes, &keyword);
            assert!(d == 1 || d == 2, "distance {d}");
        }
    }

    #[test]
    fn corpus_roundtrips_through_file_format() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 2, negatives: 2, confusables: 2 };
        let records = generate_corpus_records(&inv, &spec, 42);
        let mut buf = Vec::new();
        write_corpus(&mut buf, &inv.alphabet, 0.35, 42, &records).unwrap();
        let loaded = read_corpus(buf.as_slice()).unwrap();
        assert_eq!(loaded.records, records);
        assert_eq!(loaded.noise, 0.35);
        // Re-synthesis is bit-identical.
        let direct = generate_corpus(&inv, &spec, 0.35, 42).unwrap();
        assert_eq!(loaded.streams().unwrap(), direct);
    }

    #[test]
    fn generation_is_deterministic() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 3, negatives: 3, confusables: 3 };
        let a = generate_corpus(&inv, &spec, 0.4, 99).unwrap();
        let b = generate_corpus(&inv, &spec, 0.4, 99).unwrap();
        assert_eq!(a, b);
    }
}
