//! Phonetic search: decode to a phoneme sequence, then window-match the
//! keyword by edit distance.

use super::bigram::{collapse, decode_phonemes, PhonemeBigram};
use super::{debounce, Algorithm, Detection, WakewordError, DECISION_DELAY_FRAMES};
use crate::phonostream::{AcousticStream, PhoneId};

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Best keyword distance over all windows ending at `end` (window lengths
/// 1..=2K-1; longer or shorter windows cannot beat these). Independent of
/// any threshold.
fn window_distance(symbols: &[PhoneId], keyword: &[PhoneId], end: usize) -> usize {
    let k = keyword.len();
    let mut best = usize::MAX;
    for len in 1..=(2 * k - 1).min(end + 1) {
        let d = edit_distance(&symbols[end + 1 - len..=end], keyword);
        if d < best {
            best = d;
        }
    }
    best
}

/// Slide over the collapsed decoded sequence and fire wherever some window
/// ending at a segment has edit distance <= `max_distance` to the keyword.
///
/// A firing is deferred while the next segment's window distance is at
/// least as good, so a hit is attributed to the end of the best-matching
/// span rather than to a qualifying prefix or plateau inside it. Both the
/// qualification (monotone in `max_distance`) and the deferral (threshold
/// independent) grow the candidate set monotonically as the distance budget
/// rises.
pub fn spot_phonetic(
    stream: &AcousticStream,
    keyword: &[PhoneId],
    bigram: &PhonemeBigram,
    max_distance: usize,
) -> Result<Vec<Detection>, WakewordError> {
    let decoded = decode_phonemes(stream, bigram)?;
    let segments = collapse(&decoded.frame_states);
    let symbols: Vec<PhoneId> = segments.iter().map(|s| s.phone).collect();
    let period = stream.frame_period_ms as u64;
    let stream_end = stream.end_ms();

    let distances: Vec<usize> =
        (0..symbols.len()).map(|end| window_distance(&symbols, keyword, end)).collect();

    let mut candidates = Vec::new();
    for end in 0..symbols.len() {
        let d = distances[end];
        if d > max_distance {
            continue;
        }
        if end + 1 < symbols.len() && distances[end + 1] <= d {
            continue; // an extension matching at least as well ends later
        }
        let span_end = stream.frames[segments[end].last_frame].t_ms + period;
        let t_detect = (span_end + DECISION_DELAY_FRAMES * period).min(stream_end);
        candidates.push(Detection::new(t_detect, -(d as f64), Algorithm::Phonetic, stream));
    }
    Ok(debounce(candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonostream::{
        generate_corpus, keyword_phonemes, keyword_script, synthesize_stream, CorpusSpec,
        PhonemeAlphabet, StreamLabel, WordInventory,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive recursive Levenshtein, the independent oracle.
    fn naive_distance(a: &[usize], b: &[usize]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ha, ta)), Some((hb, tb))) => {
                let sub = naive_distance(ta, tb) + usize::from(ha != hb);
                let del = naive_distance(ta, b) + 1;
                let ins = naive_distance(a, tb) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    #[test]
    fn distance_of_identical_sequences_is_zero() {
        let x = [3usize, 1, 4, 1, 5];
        assert_eq!(edit_distance(&x, &x), 0);
    }

    #[test]
    fn distance_from_empty_is_pure_insertions() {
        let empty: [usize; 0] = [];
        assert_eq!(edit_distance(&empty, &[1usize, 2, 3]), 3);
        assert_eq!(edit_distance(&[1usize, 2, 3], &empty), 3);
    }

    #[test]
    fn distance_matches_naive_recursion_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..500 {
            let la = rng.gen_range(0..=6);
            let lb = rng.gen_range(0..=6);
            let a: Vec<usize> = (0..la).map(|_| rng.gen_range(0..4)).collect();
            let b: Vec<usize> = (0..lb).map(|_| rng.gen_range(0..4)).collect();
            assert_eq!(edit_distance(&a, &b), naive_distance(&a, &b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn clean_positive_stream_yields_exactly_one_detection() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 5, negatives: 0, confusables: 0 };
        let corpus = generate_corpus(&inv, &spec, 0.0, 21).unwrap();
        let bigram = PhonemeBigram::uniform(inv.alphabet.len());
        let keyword = keyword_phonemes(&inv.alphabet);
        for stream in &corpus {
            let dets = spot_phonetic(stream, &keyword, &bigram, 1).unwrap();
            assert_eq!(dets.len(), 1, "expected exactly one hit");
            let d = &dets[0];
            assert!(d.latency_ms.is_some());
            assert!(d.latency_ms.unwrap() >= 0);
            assert!(d.t_detect_ms <= stream.end_ms());
        }
    }

    #[test]
    fn clean_negative_stream_with_zero_distance_never_fires() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 0, negatives: 20, confusables: 0 };
        let corpus = generate_corpus(&inv, &spec, 0.0, 22).unwrap();
        let bigram = PhonemeBigram::uniform(inv.alphabet.len());
        let keyword = keyword_phonemes(&inv.alphabet);
        for stream in &corpus {
            assert!(spot_phonetic(stream, &keyword, &bigram, 0).unwrap().is_empty());
        }
    }

    #[test]
    fn raising_max_distance_never_loses_detections() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 5, negatives: 5, confusables: 10 };
        let corpus = generate_corpus(&inv, &spec, 0.5, 77).unwrap();
        let bigram = PhonemeBigram::uniform(inv.alphabet.len());
        let keyword = keyword_phonemes(&inv.alphabet);
        for stream in &corpus {
            let mut prev = 0;
            for d in 0..=3 {
                let n = spot_phonetic(stream, &keyword, &bigram, d).unwrap().len();
                assert!(n >= prev, "detections dropped from {prev} to {n} at distance {d}");
                prev = n;
            }
        }
    }

    #[test]
    fn detection_lists_are_deterministic() {
        let a = PhonemeAlphabet::default_30();
        let script = keyword_script(&a);
        let stream = synthesize_stream(&a, &script, 0.4, 5).unwrap();
        let bigram = PhonemeBigram::uniform(a.len());
        let keyword = keyword_phonemes(&a);
        let d1 = spot_phonetic(&stream, &keyword, &bigram, 2).unwrap();
        let d2 = spot_phonetic(&stream, &keyword, &bigram, 2).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn confusable_corpus_label_sanity() {
        let inv = WordInventory::default_50();
        let spec = CorpusSpec { positives: 0, negatives: 0, confusables: 5 };
        let corpus = generate_corpus(&inv, &spec, 0.0, 3).unwrap();
        assert!(corpus.iter().all(|s| s.label() == StreamLabel::Confusable));
        // distance-1 confusables fire at max_distance 1 on clean streams
        let bigram = PhonemeBigram::uniform(inv.alphabet.len());
        let keyword = keyword_phonemes(&inv.alphabet);
        for stream in &corpus {
            let d2 = spot_phonetic(stream, &keyword, &bigram, 2).unwrap();
            assert!(!d2.is_empty(), "clean confusable must fire at distance 2");
        }
    }
}
