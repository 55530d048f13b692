use serde::{Deserialize, Serialize};

use super::{
    subword_encode, LabeledSequence, Origin, PreprocError, Sentence, Target, Vocabulary, CLS, PAD,
    SEP,
};
use crate::corpus::CharSpan;

/// Begin / inside / outside tag. Declaration order is class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

impl BioTag {
    pub const ALL: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

fn check_disjoint(mentions: &[CharSpan]) -> Result<Vec<CharSpan>, PreprocError> {
    let mut sorted = mentions.to_vec();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(PreprocError::Conflict(w[0], w[1]));
        }
    }
    Ok(sorted)
}

/// Word-level BIO tags for one sentence.
///
/// A token belongs to a mention when it overlaps it by at least one character.
/// Mentions outside the sentence are ignored.
pub fn spans_to_bio(sent: &Sentence, mentions: &[CharSpan]) -> Result<Vec<BioTag>, PreprocError> {
    let mentions = check_disjoint(mentions)?;
    let mut tags = vec![BioTag::O; sent.tokens.len()];
    let mut owner: Vec<Option<CharSpan>> = vec![None; sent.tokens.len()];
    for m in mentions {
        for (k, ti) in sent.overlapping_tokens(m).enumerate() {
            if let Some(prev) = owner[ti] {
                // two disjoint mentions cutting the same token
                return Err(PreprocError::Conflict(prev, m));
            }
            owner[ti] = Some(m);
            tags[ti] = if k == 0 { BioTag::B } else { BioTag::I };
        }
    }
    Ok(tags)
}

/// Number of leading words whose pieces fit in `budget` positions, backed off
/// so a tagged mention is never cut in the middle.
fn fitting_words(pieces: &[Vec<u32>], tags: Option<&[BioTag]>, budget: usize) -> usize {
    let mut used = 0;
    let mut cut = pieces.len();
    for (i, p) in pieces.iter().enumerate() {
        if used + p.len() > budget {
            cut = i;
            break;
        }
        used += p.len();
    }
    let Some(tags) = tags else { return cut };
    if cut == pieces.len() || tags[cut] != BioTag::I {
        return cut;
    }
    let mut k = cut;
    while k > 0 && tags[k] == BioTag::I {
        k -= 1;
    }
    match tags[k] {
        BioTag::B => k,
        // orphan I run: keep the O word, drop the run
        _ => k + 1,
    }
}

fn layout(
    sent: &Sentence,
    word_tags: Option<&[BioTag]>,
    v: &Vocabulary,
    max_len: usize,
    doc_id: &str,
) -> Result<LabeledSequence, PreprocError> {
    if max_len < 3 {
        return Err(PreprocError::Length { needed: 3, max_len });
    }
    let pieces: Vec<Vec<u32>> = sent.tokens.iter().map(|t| subword_encode(&t.text, v)).collect();
    let n_words = fitting_words(&pieces, word_tags, max_len - 2);

    let mut ids = vec![CLS];
    let mut word_index = vec![None];
    let mut tags = vec![BioTag::O];
    for (w, wp) in pieces.iter().enumerate().take(n_words) {
        let word_tag = word_tags.map_or(BioTag::O, |t| t[w]);
        for (k, &id) in wp.iter().enumerate() {
            ids.push(id);
            word_index.push(Some(w));
            tags.push(match (word_tag, k) {
                (BioTag::B, 0) => BioTag::B,
                (BioTag::O, _) => BioTag::O,
                _ => BioTag::I,
            });
        }
    }
    ids.push(SEP);
    word_index.push(None);
    tags.push(BioTag::O);

    let real = ids.len();
    let mut attention_mask = vec![1u8; real];
    ids.resize(max_len, PAD);
    word_index.resize(max_len, None);
    tags.resize(max_len, BioTag::O);
    attention_mask.resize(max_len, 0);

    Ok(LabeledSequence {
        subtoken_ids: ids,
        attention_mask,
        word_index,
        target: if word_tags.is_some() {
            Target::Tags(tags)
        } else {
            Target::Unlabeled
        },
        markers: None,
        origin: Origin {
            doc_id: doc_id.to_string(),
            sentence: sent.span,
        },
    })
}

/// Projects word tags onto subword pieces: `[CLS] pieces [SEP]` padded to
/// `max_len`. Trailing whole words are dropped when the sentence is too long.
pub fn align_to_subtokens(
    sent: &Sentence,
    word_tags: &[BioTag],
    v: &Vocabulary,
    max_len: usize,
    doc_id: &str,
) -> Result<LabeledSequence, PreprocError> {
    if word_tags.len() != sent.tokens.len() {
        return Err(PreprocError::TagCount {
            expected: sent.tokens.len(),
            found: word_tags.len(),
        });
    }
    layout(sent, Some(word_tags), v, max_len, doc_id)
}

/// Unlabeled encoding of a sentence for inference.
pub fn encode_sentence(
    sent: &Sentence,
    v: &Vocabulary,
    max_len: usize,
    doc_id: &str,
) -> Result<LabeledSequence, PreprocError> {
    layout(sent, None, v, max_len, doc_id)
}

/// Character spans of the BIO runs in a word-level tag sequence.
/// An `I` that does not continue a run opens a new one.
pub fn decode_word_tags(sent: &Sentence, word_tags: &[BioTag]) -> Vec<CharSpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (w, tag) in word_tags.iter().enumerate() {
        match (tag, open) {
            (BioTag::I, Some((s, _))) => open = Some((s, w)),
            (BioTag::B | BioTag::I, _) => {
                if let Some((s, e)) = open.take() {
                    spans.push((s, e));
                }
                open = Some((w, w));
            }
            (BioTag::O, _) => {
                if let Some((s, e)) = open.take() {
                    spans.push((s, e));
                }
            }
        }
    }
    if let Some(run) = open {
        spans.push(run);
    }
    spans
        .into_iter()
        .map(|(s, e)| CharSpan::new(sent.tokens[s].span.start, sent.tokens[e].span.end))
        .collect()
}

/// Decodes per-position predictions back to character spans, reading each
/// word's tag from its first piece. Words that were truncated away count as O.
pub fn decode_bio(seq: &LabeledSequence, predicted: &[BioTag], sent: &Sentence) -> Vec<CharSpan> {
    let mut word_tags = vec![BioTag::O; sent.tokens.len()];
    let mut seen = vec![false; sent.tokens.len()];
    for (pos, w) in seq.word_index.iter().enumerate() {
        if let (Some(w), Some(tag)) = (w, predicted.get(pos)) {
            if *w < seen.len() && !seen[*w] {
                seen[*w] = true;
                word_tags[*w] = *tag;
            }
        }
    }
    decode_word_tags(sent, &word_tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preproc::{build_vocab, sentences, SPECIAL_PIECES};
    use BioTag::*;

    fn one_sentence(text: &str) -> Sentence {
        let mut s = sentences(text);
        assert_eq!(s.len(), 1);
        s.remove(0)
    }

    fn char_vocab(text: &str) -> Vocabulary {
        // characters only: every word splits into one piece per character
        let n = text.chars().filter(|c| !c.is_whitespace()).collect::<std::collections::BTreeSet<_>>().len();
        build_vocab(&[text], n + SPECIAL_PIECES.len()).unwrap()
    }

    #[test]
    fn single_word_mention() {
        let text = "pt started lisinopril 10mg daily";
        let s = one_sentence(text);
        let tags = spans_to_bio(&s, &[CharSpan::new(11, 21)]).unwrap();
        assert_eq!(tags, [O, O, B, O, O]);
        assert_eq!(decode_word_tags(&s, &tags), [CharSpan::new(11, 21)]);
    }

    #[test]
    fn two_word_mention_and_partial_overlap() {
        let s = one_sentence("insulin glargine");
        assert_eq!(spans_to_bio(&s, &[CharSpan::new(0, 16)]).unwrap(), [B, I]);
        // a gold span cutting a token still claims the whole token
        assert_eq!(spans_to_bio(&s, &[CharSpan::new(3, 10)]).unwrap(), [B, I]);
        assert_eq!(spans_to_bio(&s, &[]).unwrap(), [O, O]);
    }

    #[test]
    fn overlapping_mentions_conflict() {
        let s = one_sentence("insulin glargine");
        let err = spans_to_bio(&s, &[CharSpan::new(0, 7), CharSpan::new(5, 16)]).unwrap_err();
        assert!(matches!(err, PreprocError::Conflict(..)));
        let err = spans_to_bio(&s, &[CharSpan::new(0, 2), CharSpan::new(2, 4)]).unwrap_err();
        assert!(matches!(err, PreprocError::Conflict(..)));
    }

    #[test]
    fn orphan_inside_is_repaired() {
        let s = one_sentence("a b c");
        assert_eq!(decode_word_tags(&s, &[O, I, O]), [CharSpan::new(2, 3)]);
        assert!(decode_word_tags(&s, &[O, O, O]).is_empty());
        assert_eq!(decode_word_tags(&s, &[B, B, I]), [CharSpan::new(0, 1), CharSpan::new(2, 5)]);
    }

    #[test]
    fn begin_word_spreads_inside_over_pieces() {
        let text = "abc";
        let s = one_sentence(text);
        let v = char_vocab(text);
        let seq = align_to_subtokens(&s, &[B], &v, 16, "d").unwrap();
        assert_eq!(&seq.tags().unwrap()[..5], [O, B, I, I, O]);
        assert_eq!(seq.word_index[..5], [None, Some(0), Some(0), Some(0), None]);
        assert_eq!(seq.len(), 16);
        assert_eq!(seq.effective_len(), 5);
        assert_eq!(seq.attention_mask.iter().map(|&m| m as usize).sum::<usize>(), 5);
    }

    #[test]
    fn truncation_never_cuts_a_mention() {
        let text = "aa bb cc dd";
        let s = one_sentence(text);
        let v = char_vocab(text);
        // budget of 5 pieces fits "aa bb" and half of "cc"
        let seq = align_to_subtokens(&s, &[O, B, I, O], &v, 7, "d").unwrap();
        let kept: Vec<_> = seq.word_index.iter().flatten().copied().collect();
        assert_eq!(kept, [0, 0]);
        let seq = align_to_subtokens(&s, &[O, O, B, O], &v, 9, "d").unwrap();
        assert_eq!(seq.word_index.iter().flatten().max(), Some(&2));
        assert_eq!(decode_bio(&seq, seq.tags().unwrap(), &s), [CharSpan::new(6, 8)]);
    }

    #[test]
    fn tag_count_mismatch() {
        let s = one_sentence("a b");
        let v = char_vocab("a b");
        assert!(matches!(
            align_to_subtokens(&s, &[O], &v, 8, "d"),
            Err(PreprocError::TagCount { expected: 2, found: 1 })
        ));
    }
}
