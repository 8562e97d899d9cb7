//! The shared word inventory: one keyword, ten near-keyword pseudo-words,
//! and filler vocabulary. Corpus generation and the keyword-spotting language
//! model draw from the same list so that near-misses the spotter must reject
//! are real vocabulary entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{keyword_phonemes, PhoneId, PhonemeAlphabet, KEYWORD_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordKind {
    Keyword,
    /// Edit distance 1 or 2 from the keyword phoneme sequence.
    Confusable { distance: u8 },
    Filler,
}

#[derive(Debug, Clone)]
pub struct InventoryWord {
    pub token: String,
    pub phonemes: Vec<PhoneId>,
    pub kind: WordKind,
}

#[derive(Debug, Clone)]
pub struct WordInventory {
    pub alphabet: PhonemeAlphabet,
    pub words: Vec<InventoryWord>,
}

/// Internal seed for the deterministic filler list.
const FILLER_SEED: u64 = 0xD0B0;
const FILLER_COUNT: usize = 39;

impl WordInventory {
    /// The default 50-word inventory over the default alphabet.
    pub fn default_50() -> Self {
        Self::build(PhonemeAlphabet::default_30())
    }

    pub fn build(alphabet: PhonemeAlphabet) -> Self {
        let keyword = keyword_phonemes(&alphabet);
        let mut words = vec![InventoryWord {
            token: KEYWORD_TOKEN.to_string(),
            phonemes: keyword.clone(),
            kind: WordKind::Keyword,
        }];

        for (distance, phonemes) in confusable_edits(&alphabet) {
            let token = join_token(&alphabet, &phonemes);
            debug_assert_eq!(levenshtein(&phonemes, &keyword), distance as usize);
            words.push(InventoryWord {
                token,
                phonemes,
                kind: WordKind::Confusable { distance },
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(FILLER_SEED);
        let speech = alphabet.speech_ids();
        let keyword_grams = four_grams(&keyword);
        while words.iter().filter(|w| w.kind == WordKind::Filler).count() < FILLER_COUNT {
            let len = rng.gen_range(3..=6);
            let phonemes: Vec<PhoneId> =
                (0..len).map(|_| speech[rng.gen_range(0..speech.len())]).collect();
            if shares_gram(&phonemes, &keyword_grams) {
                continue;
            }
            if levenshtein(&phonemes, &keyword) < 3 {
                continue;
            }
            let token = join_token(&alphabet, &phonemes);
            if words.iter().any(|w| w.token == token) {
                continue;
            }
            words.push(InventoryWord { token, phonemes, kind: WordKind::Filler });
        }
        Self { alphabet, words }
    }

    pub fn keyword(&self) -> &InventoryWord {
        self.words.iter().find(|w| w.kind == WordKind::Keyword).expect("keyword present")
    }

    pub fn fillers(&self) -> Vec<&InventoryWord> {
        self.words.iter().filter(|w| w.kind == WordKind::Filler).collect()
    }

    pub fn confusables(&self, distance: u8) -> Vec<&InventoryWord> {
        self.words
            .iter()
            .filter(|w| w.kind == WordKind::Confusable { distance })
            .collect()
    }

    pub fn find(&self, token: &str) -> Option<&InventoryWord> {
        self.words.iter().find(|w| w.token == token)
    }

    pub fn tokens(&self) -> Vec<String> {
        self.words.iter().map(|w| w.token.clone()).collect()
    }
}

fn join_token(alphabet: &PhonemeAlphabet, phonemes: &[PhoneId]) -> String {
    phonemes.iter().map(|&p| alphabet.symbol(p)).collect::<Vec<_>>().join("")
}

/// Hand-picked band-adjacent edits of /j a r a sh i d/: five at distance 1,
/// five at distance 2.
fn confusable_edits(alphabet: &PhonemeAlphabet) -> Vec<(u8, Vec<PhoneId>)> {
    let id = |s: &str| alphabet.id(s).expect("symbol in alphabet");
    let (a, b, d, e, h, i, j, k, q, r, s, z, sh, th) = (
        id("a"),
        id("b"),
        id("d"),
        id("e"),
        id("h"),
        id("i"),
        id("j"),
        id("k"),
        id("q"),
        id("r"),
        id("s"),
        id("z"),
        id("sh"),
        id("th"),
    );
    vec![
        (1, vec![k, a, r, a, sh, i, d]),
        (1, vec![j, a, s, a, sh, i, d]),
        (1, vec![j, a, r, a, z, i, d]),
        (1, vec![j, a, r, a, sh, h, d]),
        (1, vec![j, a, r, a, sh, i, e]),
        (2, vec![k, a, r, a, sh, i, e]),
        (2, vec![j, a, q, a, th, i, d]),
        (2, vec![j, a, r, a, z, i]),
        (2, vec![a, r, a, sh, h, d]),
        (2, vec![j, a, b, r, a, sh, i, b]),
    ]
}

pub(crate) fn four_grams(seq: &[PhoneId]) -> Vec<&[PhoneId]> {
    if seq.len() < 4 {
        return Vec::new();
    }
    seq.windows(4).collect()
}

pub(crate) fn shares_gram(candidate: &[PhoneId], grams: &[&[PhoneId]]) -> bool {
    candidate.windows(4).any(|w| grams.contains(&w))
}

/// Unit-cost Levenshtein, used only to validate generated words. The public
/// operation lives in the wakeword module.
pub(crate) fn levenshtein(a: &[PhoneId], b: &[PhoneId]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory_has_fifty_unique_words() {
        let inv = WordInventory::default_50();
        assert_eq!(inv.words.len(), 50);
        let mut tokens: Vec<_> = inv.words.iter().map(|w| w.token.clone()).collect();
        tokens.sort();
        tokens.dedup();
        assert_eq!(tokens.len(), 50);
        assert_eq!(inv.confusables(1).len(), 5);
        assert_eq!(inv.confusables(2).len(), 5);
        assert_eq!(inv.fillers().len(), 39);
    }

    #[test]
    fn confusables_sit_at_declared_distances() {
        let inv = WordInventory::default_50();
        let keyword = inv.keyword().phonemes.clone();
        for w in inv.words.iter() {
            if let WordKind::Confusable { distance } = w.kind {
                assert_eq!(levenshtein(&w.phonemes, &keyword), distance as usize, "{}", w.token);
            }
        }
    }

    #[test]
    fn fillers_avoid_keyword_four_grams() {
        let inv = WordInventory::default_50();
        let keyword = inv.keyword().phonemes.clone();
        let grams = four_grams(&keyword);
        for w in inv.fillers() {
            assert!(!shares_gram(&w.phonemes, &grams), "{}", w.token);
            assert!(levenshtein(&w.phonemes, &keyword) >= 3);
        }
    }

    #[test]
    fn inventory_is_deterministic() {
        let a = WordInventory::default_50();
        let b = WordInventory::default_50();
        let ta: Vec<_> = a.words.iter().map(|w| w.token.clone()).collect();
        let tb: Vec<_> = b.words.iter().map(|w| w.token.clone()).collect();
        assert_eq!(ta, tb);
    }
}
