//! Character-level string similarities, each in `[0, 1]`.

use serde::{Deserialize, Serialize};

/// Ratcliff-Obershelp ("gestalt") similarity `2K / (|a| + |b|)`, where `K`
/// counts characters matched by recursively splitting around the longest
/// common substring. No junk heuristics. Among equally long common
/// substrings the one starting earliest in the first argument (then the
/// second) is taken; because that rule alone is order dependent, `K` is the
/// larger of the two argument orders, which makes the measure symmetric.
pub fn ratcliff_obershelp(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    ratcliff_obershelp_chars(&a, &b)
}

pub fn ratcliff_obershelp_chars(a: &[char], b: &[char]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let k = matching_chars(a, b).max(matching_chars(b, a));
    2.0 * k as f64 / total as f64
}

/// Characters matched by the recursive longest-common-substring split,
/// taking ties at the smallest start in `a`, then in `b`.
pub fn matching_chars(a: &[char], b: &[char]) -> usize {
    let mut total = 0;
    let mut stack = vec![(0, a.len(), 0, b.len())];
    let mut row = vec![0usize; b.len() + 1];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        let (i, j, len) = longest_common_substring(a, b, (alo, ahi), (blo, bhi), &mut row);
        if len == 0 {
            continue;
        }
        total += len;
        if alo < i && blo < j {
            stack.push((alo, i, blo, j));
        }
        if i + len < ahi && j + len < bhi {
            stack.push((i + len, ahi, j + len, bhi));
        }
    }
    total
}

/// Longest common substring of `a[alo..ahi]` and `b[blo..bhi]` as
/// `(start_a, start_b, len)`.
fn longest_common_substring(
    a: &[char],
    b: &[char],
    (alo, ahi): (usize, usize),
    (blo, bhi): (usize, usize),
    row: &mut [usize],
) -> (usize, usize, usize) {
    // row[j + 1 - blo] holds the length of the common suffix ending at
    // (i - 1, j) from the previous iteration of i.
    let width = bhi - blo;
    row[..=width].iter_mut().for_each(|x| *x = 0);
    let mut best = (alo, blo, 0usize);
    for i in alo..ahi {
        let mut diag = 0;
        for j in blo..bhi {
            let up_left = diag;
            diag = row[j + 1 - blo];
            let cell = if a[i] == b[j] { up_left + 1 } else { 0 };
            row[j + 1 - blo] = cell;
            if cell > 0 {
                let (si, sj) = (i + 1 - cell, j + 1 - cell);
                if cell > best.2 || (cell == best.2 && (si, sj) < (best.0, best.1)) {
                    best = (si, sj, cell);
                }
            }
        }
    }
    best
}

pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    jaro_chars(&a, &b)
}

pub fn jaro_chars(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_matched).filter(|(_, &m)| m).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_matched).filter(|(_, &m)| m).map(|(c, _)| c);
    let half_transpositions = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let m = matches as f64;
    let t = half_transpositions as f64 / 2.0;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler with prefix scale 0.1 and prefix length capped at 4.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    jaro_winkler_chars(&a, &b)
}

pub fn jaro_winkler_chars(a: &[char], b: &[char]) -> f64 {
    let j = jaro_chars(a, b);
    let prefix = a.iter().zip(b).take(4).take_while(|(x, y)| x == y).count();
    j + prefix as f64 * 0.1 * (1.0 - j)
}

/// Unit-cost edit distance.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    edit_distance(a, b, 1)
}

fn edit_distance(a: &[char], b: &[char], substitution: usize) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + if ca == cb { 0 } else { substitution };
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Which "Levenshtein ratio" to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevenshteinVariant {
    /// `1 - D / max(|a|, |b|)` with unit costs.
    #[default]
    MaxLength,
    /// `(|a| + |b| - D') / (|a| + |b|)` where `D'` charges 2 per substitution.
    IndelSum,
}

pub fn levenshtein_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_ratio_chars(&a, &b, LevenshteinVariant::MaxLength)
}

pub fn levenshtein_ratio_chars(a: &[char], b: &[char], variant: LevenshteinVariant) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    match variant {
        LevenshteinVariant::MaxLength => {
            1.0 - levenshtein(a, b) as f64 / a.len().max(b.len()) as f64
        }
        LevenshteinVariant::IndelSum => {
            let total = (a.len() + b.len()) as f64;
            (total - edit_distance(a, b, 2) as f64) / total
        }
    }
}
