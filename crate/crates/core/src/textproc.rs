//! Caption normalization, vocabularies and framed token sequences.
//!
//! Captions are lowercased, stripped of every character outside `[a-z0-9]`
//! (apostrophes and hyphens are deleted, not split on) and split on
//! whitespace. A [`Vocabulary`] always starts with the reserved block
//! `<pad>`, `<sos>`, `<eos>`, `<unk>` at indices 0 to 3.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const PAD: u32 = 0;
pub const SOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const SOS_TOKEN: &str = "<sos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

const RESERVED: [&str; 4] = [PAD_TOKEN, SOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

/// Number of reserved entries at the head of every vocabulary.
pub const NUM_RESERVED: usize = RESERVED.len();

#[derive(Debug, Error)]
pub enum TextError {
    #[error("token id {id} is outside the vocabulary (size {size})")]
    IdOutOfRange { id: u32, size: usize },
    #[error("malformed token sequence: {0}")]
    MalformedSequence(String),
    #[error("vocabulary file line {line}: {reason}")]
    VocabularyFormat { line: usize, reason: String },
    #[error("vocabulary io: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercases `raw`, deletes every character outside `[a-z0-9]` and splits on
/// whitespace.
pub fn normalize_and_tokenize(raw: &str) -> Vec<String> {
    raw.split_whitespace()
        .filter_map(|chunk| {
            let word: String = chunk
                .chars()
                .flat_map(char::to_lowercase)
                .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
                .collect();
            (!word.is_empty()).then_some(word)
        })
        .collect()
}

/// Bidirectional word/index map with the reserved block at indices 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::reserved_only()
    }
}

impl Vocabulary {
    /// A vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        let mut vocab = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for tok in RESERVED {
            vocab.push(tok.to_string());
        }
        vocab
    }

    fn push(&mut self, word: String) -> u32 {
        if let Some(&id) = self.index.get(&word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.index.insert(word.clone(), id);
        self.words.push(word);
        id
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of non-reserved words.
    pub fn content_len(&self) -> usize {
        self.words.len() - NUM_RESERVED
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Content words in index order.
    pub fn content_words(&self) -> &[String] {
        &self.words[NUM_RESERVED..]
    }

    /// Serializes to the line-oriented format: one word per line, reserved
    /// block first, `\n` terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            let _ = writeln!(out, "{w}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TextError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < NUM_RESERVED {
            return Err(TextError::VocabularyFormat {
                line: lines.len() + 1,
                reason: "missing reserved block".into(),
            });
        }
        for (i, tok) in RESERVED.iter().enumerate() {
            if lines[i] != *tok {
                return Err(TextError::VocabularyFormat {
                    line: i + 1,
                    reason: format!("expected reserved token {tok}, found {:?}", lines[i]),
                });
            }
        }
        let mut vocab = Vocabulary::reserved_only();
        for (i, line) in lines.iter().enumerate().skip(NUM_RESERVED) {
            let normalized = normalize_and_tokenize(line);
            if normalized.len() != 1 || normalized[0] != *line {
                return Err(TextError::VocabularyFormat {
                    line: i + 1,
                    reason: format!("{line:?} is not a single normalized word"),
                });
            }
            if vocab.id(line).is_some() {
                return Err(TextError::VocabularyFormat {
                    line: i + 1,
                    reason: format!("duplicate word {line:?}"),
                });
            }
            vocab.push(line.to_string());
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TextError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Builds a vocabulary from normalized captions; content words keep their
/// first-occurrence order.
pub fn build_vocabulary<S: AsRef<[String]>>(captions: &[S]) -> Vocabulary {
    let mut vocab = Vocabulary::reserved_only();
    for caption in captions {
        for word in caption.as_ref() {
            if vocab.id(word).is_none() {
                vocab.push(word.clone());
            }
        }
    }
    vocab
}

/// Union of two vocabularies: `a` keeps its indices, `b`'s novel words are
/// appended in `b`'s order.
pub fn merge_vocabularies(a: &Vocabulary, b: &Vocabulary) -> Vocabulary {
    let mut merged = a.clone();
    for word in b.content_words() {
        merged.push(word.clone());
    }
    merged
}

/// Ids of the sequence framing tokens, and which ids a decoder may never emit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokens {
    pub sos: u32,
    pub eos: u32,
    /// Never valid as a generated token. Always contains `sos`.
    pub non_emittable: Vec<u32>,
}

impl SpecialTokens {
    /// Framing for vocabularies built by this module: `<pad>` and `<sos>`
    /// are never emitted.
    pub fn standard() -> Self {
        SpecialTokens {
            sos: SOS,
            eos: EOS,
            non_emittable: vec![PAD, SOS],
        }
    }

    /// Framing with only `sos` blocked, for small hand-built models.
    pub fn new(sos: u32, eos: u32) -> Self {
        SpecialTokens {
            sos,
            eos,
            non_emittable: vec![sos],
        }
    }

    pub fn is_emittable(&self, id: u32) -> bool {
        !self.non_emittable.contains(&id)
    }

    fn is_valid_interior(&self, id: u32) -> bool {
        id != self.sos && id != self.eos && self.is_emittable(id)
    }
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self::standard()
    }
}

/// A caption as token ids: `sos`, interior ids, `eos`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    ids: Vec<u32>,
}

impl TokenSequence {
    /// Validates framing: first id is `sos`, last is `eos`, and the interior
    /// holds no framing or non-emittable ids.
    pub fn new(ids: Vec<u32>, specials: &SpecialTokens) -> Result<Self, TextError> {
        if ids.len() < 2 {
            return Err(TextError::MalformedSequence(format!(
                "length {} < 2",
                ids.len()
            )));
        }
        if ids[0] != specials.sos || ids[ids.len() - 1] != specials.eos {
            return Err(TextError::MalformedSequence(
                "sequence must start with sos and end with eos".into(),
            ));
        }
        if let Some(bad) = ids[1..ids.len() - 1]
            .iter()
            .find(|&&id| !specials.is_valid_interior(id))
        {
            return Err(TextError::MalformedSequence(format!(
                "reserved id {bad} in the interior"
            )));
        }
        Ok(TokenSequence { ids })
    }

    /// Frames `interior` with `sos`/`eos`.
    pub fn from_interior(interior: &[u32], specials: &SpecialTokens) -> Result<Self, TextError> {
        let mut ids = Vec::with_capacity(interior.len() + 2);
        ids.push(specials.sos);
        ids.extend_from_slice(interior);
        ids.push(specials.eos);
        Self::new(ids, specials)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn interior(&self) -> &[u32] {
        &self.ids[1..self.ids.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// Never true: a sequence always holds at least `sos` and `eos`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.ids
    }
}

/// Maps normalized words to ids (unknown words become `<unk>`) and frames the
/// result with `<sos>`/`<eos>`.
pub fn encode<S: AsRef<str>>(words: &[S], vocab: &Vocabulary) -> TokenSequence {
    let mut ids = Vec::with_capacity(words.len() + 2);
    ids.push(SOS);
    ids.extend(
        words
            .iter()
            .map(|w| vocab.id(w.as_ref()).filter(|&id| id >= UNK).unwrap_or(UNK)),
    );
    ids.push(EOS);
    TokenSequence { ids }
}

/// Maps the interior of `seq` back to words. `<unk>` decodes to `"<unk>"`.
pub fn decode_to_words(seq: &TokenSequence, vocab: &Vocabulary) -> Result<Vec<String>, TextError> {
    seq.interior()
        .iter()
        .map(|&id| {
            vocab
                .word(id)
                .map(str::to_string)
                .ok_or(TextError::IdOutOfRange {
                    id,
                    size: vocab.len(),
                })
        })
        .collect()
}

/// Normalizes and encodes a raw caption in one step.
pub fn encode_caption(raw: &str, vocab: &Vocabulary) -> TokenSequence {
    encode(&normalize_and_tokenize(raw), vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_and_tokenize("A Dog Barks."), words("a dog barks"));
        assert!(normalize_and_tokenize("").is_empty());
        assert_eq!(
            normalize_and_tokenize("It's  raining, hard!"),
            words("its raining hard")
        );
        assert_eq!(normalize_and_tokenize("rain-soaked ... !"), words("rainsoaked"));
    }

    #[test]
    fn build_vocabulary_sizes() {
        let v = build_vocabulary(&[words("a dog"), words("a cat")]);
        assert_eq!(v.len(), 7);
        assert_eq!(v.content_words(), &words("a dog cat")[..]);
        let empty: Vec<Vec<String>> = vec![];
        assert_eq!(build_vocabulary(&empty).len(), 4);
        assert_eq!(v.id(PAD_TOKEN), Some(PAD));
        assert_eq!(v.id(SOS_TOKEN), Some(SOS));
        assert_eq!(v.id(EOS_TOKEN), Some(EOS));
        assert_eq!(v.id(UNK_TOKEN), Some(UNK));
    }

    #[test]
    fn merge_examples() {
        let a = build_vocabulary(&[words("a dog")]);
        let b = build_vocabulary(&[words("a cat")]);
        let m = merge_vocabularies(&a, &b);
        assert_eq!(m.len(), 7);
        assert_eq!(m.id("dog"), a.id("dog"));
        assert_eq!(m.id("cat"), Some(6));
        assert_eq!(merge_vocabularies(&a, &a), a);
    }

    #[test]
    fn encode_decode_examples() {
        let v = build_vocabulary(&[words("a dog")]);
        let seq = encode(&words("a dog"), &v);
        assert_eq!(seq.ids(), &[SOS, 4, 5, EOS]);
        assert_eq!(decode_to_words(&seq, &v).unwrap(), words("a dog"));

        let unk = encode(&words("zzz"), &v);
        assert_eq!(unk.ids(), &[SOS, UNK, EOS]);
        assert_eq!(decode_to_words(&unk, &v).unwrap(), vec![UNK_TOKEN.to_string()]);

        let empty = encode::<String>(&[], &v);
        assert_eq!(empty.ids(), &[SOS, EOS]);
        assert!(decode_to_words(&empty, &v).unwrap().is_empty());
    }

    #[test]
    fn reserved_words_in_captions_become_unk() {
        let v = Vocabulary::reserved_only();
        assert_eq!(encode(&["<eos>"], &v).ids(), &[SOS, UNK, EOS]);
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let v = Vocabulary::reserved_only();
        let seq = TokenSequence::new(vec![SOS, 99, EOS], &SpecialTokens::standard()).unwrap();
        assert!(matches!(
            decode_to_words(&seq, &v),
            Err(TextError::IdOutOfRange { id: 99, .. })
        ));
    }

    #[test]
    fn sequence_framing_is_validated() {
        let sp = SpecialTokens::standard();
        assert!(TokenSequence::new(vec![SOS], &sp).is_err());
        assert!(TokenSequence::new(vec![EOS, SOS], &sp).is_err());
        assert!(TokenSequence::new(vec![SOS, PAD, EOS], &sp).is_err());
        assert!(TokenSequence::new(vec![SOS, EOS, EOS], &sp).is_err());
        assert!(TokenSequence::new(vec![SOS, UNK, EOS], &sp).is_ok());
    }

    #[test]
    fn vocabulary_file_round_trip_is_byte_exact() {
        let v = build_vocabulary(&[words("a dog barks"), words("the cat")]);
        let text = v.to_text();
        assert!(text.starts_with("<pad>\n<sos>\n<eos>\n<unk>\na\n"));
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn vocabulary_file_errors() {
        assert!(Vocabulary::from_text("<pad>\n<sos>\n").is_err());
        assert!(Vocabulary::from_text("<pad>\n<eos>\n<sos>\n<unk>\n").is_err());
        assert!(Vocabulary::from_text("<pad>\n<sos>\n<eos>\n<unk>\na\na\n").is_err());
        assert!(Vocabulary::from_text("<pad>\n<sos>\n<eos>\n<unk>\nDog\n").is_err());
    }

    fn caption_strategy() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec("[a-z0-9]{1,6}", 0..12)
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,60}") {
            let once = normalize_and_tokenize(&s);
            let twice = normalize_and_tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn round_trip_in_vocabulary(captions in prop::collection::vec(caption_strategy(), 1..6)) {
            let v = build_vocabulary(&captions);
            for c in &captions {
                prop_assert_eq!(&decode_to_words(&encode(c, &v), &v).unwrap(), c);
            }
        }

        #[test]
        fn build_size_counts_distinct(captions in prop::collection::vec(caption_strategy(), 0..6)) {
            let distinct: std::collections::HashSet<&String> = captions.iter().flatten().collect();
            prop_assert_eq!(build_vocabulary(&captions).len(), NUM_RESERVED + distinct.len());
        }

        #[test]
        fn merge_is_union_and_idempotent(
            a in prop::collection::vec(caption_strategy(), 0..4),
            b in prop::collection::vec(caption_strategy(), 0..4),
        ) {
            let va = build_vocabulary(&a);
            let vb = build_vocabulary(&b);
            let m = merge_vocabularies(&va, &vb);
            let expected: std::collections::HashSet<&String> =
                va.content_words().iter().chain(vb.content_words()).collect();
            let got: std::collections::HashSet<&String> = m.content_words().iter().collect();
            prop_assert_eq!(got, expected);
            prop_assert_eq!(merge_vocabularies(&m, &vb), m.clone());
            for w in va.content_words() {
                prop_assert_eq!(m.id(w), va.id(w));
            }
        }
    }
}
