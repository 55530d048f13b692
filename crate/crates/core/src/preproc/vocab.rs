use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{tokenize, PreprocError};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const S_MARK: u32 = 4;
pub const E_MARK: u32 = 5;

pub const SPECIAL_PIECES: [&str; 6] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[S]", "[E]"];

/// Default number of pieces a vocabulary grows to.
pub const DEFAULT_VOCAB_SIZE: usize = 4096;

/// Subword piece inventory. Ids are dense; ids 0 to 5 are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    pieces: Vec<String>,
    ids: HashMap<String, u32>,
    max_piece_chars: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its pieces in id order.
    pub fn from_pieces(pieces: Vec<String>) -> Result<Self, PreprocError> {
        if pieces.len() < SPECIAL_PIECES.len()
            || pieces.iter().zip(SPECIAL_PIECES).any(|(p, s)| p != s)
        {
            return Err(PreprocError::Vocabulary(
                "special tokens must occupy ids 0-5".into(),
            ));
        }
        let mut ids = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() {
                return Err(PreprocError::Vocabulary(format!("empty piece at id {i}")));
            }
            if ids.insert(p.clone(), i as u32).is_some() {
                return Err(PreprocError::Vocabulary(format!("duplicate piece {p:?}")));
            }
        }
        let max_piece_chars = pieces[SPECIAL_PIECES.len()..]
            .iter()
            .map(|p| p.chars().count())
            .max()
            .unwrap_or(1);
        Ok(Vocabulary {
            pieces,
            ids,
            max_piece_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.len() <= SPECIAL_PIECES.len()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.ids.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    fn is_special(&self, piece: &str) -> bool {
        self.ids.get(piece).is_some_and(|&id| (id as usize) < SPECIAL_PIECES.len())
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = PreprocError;

    fn try_from(pieces: Vec<String>) -> Result<Self, Self::Error> {
        Vocabulary::from_pieces(pieces)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.pieces
    }
}

/// Builds a merge vocabulary from raw texts.
///
/// Starts from every character seen inside a token, then repeatedly adds the
/// most frequent concatenation of two adjacent pieces within a word (counted
/// over word occurrences) until `target_size` pieces exist or no pair is left.
/// Ties go to the lexicographically smallest `(left, right)` pair.
pub fn build_vocab<S: AsRef<str>>(
    texts: &[S],
    target_size: usize,
) -> Result<Vocabulary, PreprocError> {
    let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        for tok in tokenize(text.as_ref()) {
            *word_counts.entry(tok.text).or_default() += 1;
        }
    }
    let chars: BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
    let needed = chars.len() + SPECIAL_PIECES.len();
    if target_size < needed {
        return Err(PreprocError::Capacity {
            needed,
            target: target_size,
        });
    }

    let mut pieces: Vec<String> = SPECIAL_PIECES.iter().map(|s| s.to_string()).collect();
    let mut ids: HashMap<String, u32> = HashMap::new();
    for c in &chars {
        let s = c.to_string();
        // a single-character word like "[" never collides: specials are multi-character
        ids.insert(s.clone(), pieces.len() as u32);
        pieces.push(s);
    }

    // Each word type as a sequence of piece ids, with its corpus frequency.
    let mut words: Vec<(Vec<u32>, usize)> = word_counts
        .iter()
        .map(|(w, &n)| (w.chars().map(|c| ids[&c.to_string()]).collect(), n))
        .collect();

    while pieces.len() < target_size {
        let mut pair_counts: HashMap<(u32, u32), usize> = HashMap::new();
        for (seq, n) in &words {
            for w in seq.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_default() += n;
            }
        }
        let Some(best) = pair_counts
            .iter()
            .max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    let ka = (&pieces[pa.0 as usize], &pieces[pa.1 as usize]);
                    let kb = (&pieces[pb.0 as usize], &pieces[pb.1 as usize]);
                    kb.cmp(&ka)
                })
            })
            .map(|(p, _)| *p)
        else {
            break;
        };
        let merged = format!("{}{}", pieces[best.0 as usize], pieces[best.1 as usize]);
        let merged_id = match ids.get(&merged) {
            Some(&id) => id,
            None => {
                let id = pieces.len() as u32;
                ids.insert(merged.clone(), id);
                pieces.push(merged);
                id
            }
        };
        for (seq, _) in &mut words {
            if seq.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && (seq[i], seq[i + 1]) == best {
                    out.push(merged_id);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            *seq = out;
        }
    }
    Vocabulary::from_pieces(pieces)
}

/// Greedy longest-match segmentation. Characters with no piece become UNK.
pub fn subword_encode(word: &str, v: &Vocabulary) -> Vec<u32> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = chars[i].0;
        let longest = (1..=v.max_piece_chars.min(chars.len() - i)).rev().find_map(|n| {
            let end = chars.get(i + n).map_or(word.len(), |&(b, _)| b);
            let piece = &word[start..end];
            v.id(piece)
                .filter(|_| !v.is_special(piece))
                .map(|id| (id, n))
        });
        match longest {
            Some((id, n)) => {
                out.push(id);
                i += n;
            }
            None => {
                out.push(UNK);
                i += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab_of(extra: &[&str]) -> Vocabulary {
        let mut p: Vec<String> = SPECIAL_PIECES.iter().map(|s| s.to_string()).collect();
        p.extend(extra.iter().map(|s| s.to_string()));
        Vocabulary::from_pieces(p).unwrap()
    }

    #[test]
    fn repeated_letter_merges_most_frequent_pair_first() {
        let v = build_vocab(&["aaaa"], 100).unwrap();
        // a, then aa (pair count 3), then aaaa once the word reads [aa, aa]
        assert_eq!(&v.pieces()[6..], ["a", "aa", "aaaa"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        // pairs (a,b) and (c,d) both occur once; (a,b) wins
        let v = build_vocab(&["ab cd"], 11).unwrap();
        assert_eq!(&v.pieces()[6..], ["a", "b", "c", "d", "ab"]);
    }

    #[test]
    fn capacity_error() {
        let err = build_vocab(&["abc"], 8).unwrap_err();
        assert!(matches!(err, PreprocError::Capacity { needed: 9, target: 8 }));
    }

    #[test]
    fn deterministic() {
        let texts = ["pt started lisinopril 10 mg.", "Stopped aspirin; started plavix!"];
        assert_eq!(build_vocab(&texts, 60).unwrap(), build_vocab(&texts, 60).unwrap());
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab_of(&["a", "b", "c", "ab"]);
        let ab = v.id("ab").unwrap();
        let c = v.id("c").unwrap();
        assert_eq!(subword_encode("abc", &v), [ab, c]);
        assert_eq!(subword_encode("ab", &v), [ab]);
        assert_eq!(subword_encode("axb", &v), [v.id("a").unwrap(), UNK, v.id("b").unwrap()]);
    }

    #[test]
    fn specials_never_matched_inside_words() {
        let v = vocab_of(&["[", "S", "]"]);
        let ids = subword_encode("[S]", &v);
        assert_eq!(ids.len(), 3);
        assert!(!ids.contains(&S_MARK));
    }

    #[test]
    fn serde_as_piece_list() {
        let v = build_vocab(&["aspirin"], 30).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn segmentation_is_total(corpus in "[a-f ]{1,40}", word in "[a-h]{1,12}", size in 12usize..60) {
            let v = build_vocab(&[corpus.as_str()], size.max(6 + 6)).unwrap();
            let ids = subword_encode(&word, &v);
            let mut rebuilt = String::new();
            for id in &ids {
                if *id == UNK {
                    rebuilt.push('?');
                } else {
                    rebuilt.push_str(v.piece(*id).unwrap());
                }
            }
            let expected: String = word
                .chars()
                .map(|c| if v.id(&c.to_string()).is_some() { c } else { '?' })
                .collect();
            prop_assert_eq!(rebuilt, expected);
            for c in corpus.chars().filter(|c| !c.is_whitespace()) {
                prop_assert!(v.id(&c.to_string()).is_some());
            }
        }
    }
}
