//! Useful-text selection: rank auxiliary texts by string similarity to the
//! mention context and keep the top k.

use serde::{Deserialize, Serialize};

use crate::similarity::{
    jaro_winkler_chars, levenshtein_ratio_chars, ratcliff_obershelp_chars, LevenshteinVariant,
};

/// Characters of normalized text compared by the similarity measures.
pub const MAX_COMPARED_CHARS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub max_chars: usize,
    pub levenshtein: LevenshteinVariant,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            max_chars: MAX_COMPARED_CHARS,
            levenshtein: LevenshteinVariant::MaxLength,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredText {
    pub text: String,
    /// Mean of `components`.
    pub score: f64,
    /// Position in the input list.
    pub source_rank: usize,
    /// Ratcliff-Obershelp, Jaro-Winkler, Levenshtein ratio.
    pub components: [f64; 3],
}

/// Lowercases, collapses whitespace and truncates to `max_chars`.
pub fn normalize_for_similarity(text: &str, max_chars: usize) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len().min(max_chars));
    for (n, word) in text.split_whitespace().enumerate() {
        if n > 0 {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
        if out.len() >= max_chars {
            break;
        }
    }
    out.truncate(max_chars);
    out
}

pub fn similarity_components(a: &[char], b: &[char], cfg: &SelectionConfig) -> [f64; 3] {
    [
        ratcliff_obershelp_chars(a, b),
        jaro_winkler_chars(a, b),
        levenshtein_ratio_chars(a, b, cfg.levenshtein),
    ]
}

/// Scores every text against `context` and returns the top `k` by
/// descending score, ties kept in input order.
pub fn select_useful_texts<S: AsRef<str>>(
    context: &str,
    texts: &[S],
    k: usize,
    cfg: &SelectionConfig,
) -> Vec<ScoredText> {
    if k == 0 || texts.is_empty() {
        return Vec::new();
    }
    let ctx = normalize_for_similarity(context, cfg.max_chars);
    let mut scored: Vec<ScoredText> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let norm = normalize_for_similarity(t.as_ref(), cfg.max_chars);
            let components = similarity_components(&ctx, &norm, cfg);
            ScoredText {
                text: t.as_ref().to_string(),
                score: components.iter().sum::<f64>() / 3.0,
                source_rank: i,
                components,
            }
        })
        .collect();
    // stable sort keeps input order among equal scores
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    scored.truncate(k);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SelectionConfig {
        SelectionConfig::default()
    }

    #[test]
    fn identical_text_wins() {
        let out = select_useful_texts("c", &["c", "zz"], 1, &cfg());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "c");
        assert_eq!(out[0].score, 1.0);
        assert_eq!(out[0].components, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn k_zero_selects_nothing() {
        assert!(select_useful_texts("c", &["c"], 0, &cfg()).is_empty());
    }

    #[test]
    fn fewer_texts_than_k() {
        let out = select_useful_texts("abc", &["abd", "xyz"], 5, &cfg());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].text, "abd");
    }

    #[test]
    fn ties_keep_input_order() {
        let out = select_useful_texts("abc", &["xyz", "qqq", "abc", "www"], 4, &cfg());
        let ranks: Vec<usize> = out.iter().map(|s| s.source_rank).collect();
        assert_eq!(ranks[0], 2);
        // all-mismatch texts score 0 and keep their order
        assert_eq!(&ranks[1..], &[0, 1, 3]);
    }

    #[test]
    fn normalization() {
        let n: String = normalize_for_similarity("  Hello \n  WORLD ", 512).into_iter().collect();
        assert_eq!(n, "hello world");
        assert_eq!(normalize_for_similarity(&"a".repeat(600), 512).len(), 512);
    }

    #[test]
    fn comparison_is_case_insensitive() {
        let out = select_useful_texts("Roosevelt", &["ROOSEVELT"], 1, &cfg());
        assert_eq!(out[0].score, 1.0);
    }
}
