//! Word-level tokenizer with a frequency-learned vocabulary.

use std::collections::HashMap;

/// Reserved token ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(usize)]
pub enum Special {
    Unk = 0,
    Cls = 1,
    Sep = 2,
    S = 3,
    SlashS = 4,
    D = 5,
    SlashD = 6,
    Q = 7,
    SlashQ = 8,
    Mention = 9,
    SlashMention = 10,
}

pub const SPECIAL_TOKENS: [&str; 11] = [
    "[UNK]", "[CLS]", "[SEP]", "<s>", "</s>", "<d>", "</d>", "<q>", "</q>", "[M]", "[/M]",
];

/// Mention boundary markers as they appear in context text.
pub const MENTION_OPEN: &str = "[M]";
pub const MENTION_CLOSE: &str = "[/M]";

impl Special {
    pub fn id(self) -> usize {
        self as usize
    }
}

/// Splits text into word pieces: maximal alphanumeric runs, single
/// punctuation characters, and the mention markers. Returns char spans.
pub fn pretokenize_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if let Some(len) = marker_at(&chars, i) {
            spans.push((i, i + len));
            i += len;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            spans.push((start, i));
        } else {
            spans.push((i, i + 1));
            i += 1;
        }
    }
    spans
}

fn marker_at(chars: &[char], i: usize) -> Option<usize> {
    [MENTION_OPEN, MENTION_CLOSE].iter().find_map(|m| {
        let len = m.chars().count();
        let matches = i + len <= chars.len() && chars[i..i + len].iter().copied().eq(m.chars());
        matches.then_some(len)
    })
}

/// Lowercased word pieces of `text`; mention markers keep their form.
pub fn pretokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    pretokenize_spans(text)
        .into_iter()
        .map(|(s, e)| {
            let piece: String = chars[s..e].iter().collect();
            if piece == MENTION_OPEN || piece == MENTION_CLOSE {
                piece
            } else {
                piece.to_lowercase()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    /// Token strings by id; the first entries are `SPECIAL_TOKENS`.
    vocab: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Tokenizer {
    /// Learns a vocabulary of at most `max_size` entries (specials
    /// included) from word frequencies; ties broken alphabetically.
    pub fn learn<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for piece in pretokenize(t) {
                *freq.entry(piece).or_insert(0) += 1;
            }
        }
        for s in SPECIAL_TOKENS {
            freq.remove(s);
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_size.saturating_sub(SPECIAL_TOKENS.len());
        let vocab = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(room).map(|(w, _)| w))
            .collect();
        Self::from_vocab(vocab).expect("learned vocabulary starts with the specials")
    }

    pub fn from_vocab(vocab: Vec<String>) -> Option<Self> {
        if vocab.len() < SPECIAL_TOKENS.len() || vocab.iter().zip(SPECIAL_TOKENS).any(|(a, b)| a != b) {
            return None;
        }
        let lookup = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Some(Self { vocab, lookup })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn token_id(&self, piece: &str) -> usize {
        self.lookup.get(piece).copied().unwrap_or(Special::Unk.id())
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        pretokenize(text).iter().map(|p| self.token_id(p)).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        self.vocab.get(id).map(String::as_str).unwrap_or(SPECIAL_TOKENS[0])
    }
}
