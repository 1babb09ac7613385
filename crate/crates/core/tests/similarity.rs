use std::collections::HashMap;

use proptest::prelude::*;

use cqael_core::similarity::{jaro_winkler, levenshtein, levenshtein_ratio, ratcliff_obershelp};

/// Recursive edit distance, memoized on suffix pairs.
fn edit_oracle(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Brute-force gestalt matching: longest common block found by trying every
/// start pair, earliest in `a` then in `b`, then recursion on both sides.
fn gestalt_matches(a: &[char], b: &[char]) -> usize {
    let mut best = (0, 0, 0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut n = 0;
            while i + n < a.len() && j + n < b.len() && a[i + n] == b[j + n] {
                n += 1;
            }
            if n > best.2 {
                best = (i, j, n);
            }
        }
    }
    let (i, j, n) = best;
    if n == 0 {
        return 0;
    }
    n + gestalt_matches(&a[..i], &b[..j]) + gestalt_matches(&a[i + n..], &b[j + n..])
}

fn gestalt_oracle(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let k = gestalt_matches(&a, &b).max(gestalt_matches(&b, &a));
    2.0 * k as f64 / (a.len() + b.len()) as f64
}

/// Jaro-Winkler straight from the definition.
fn jaro_winkler_oracle(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut taken = vec![false; b.len()];
    let mut a_matched = Vec::new();
    for (i, &c) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        if let Some(j) = (lo..hi).find(|&j| !taken[j] && b[j] == c) {
            taken[j] = true;
            a_matched.push(c);
        }
    }
    let m = a_matched.len();
    if m == 0 {
        return 0.0;
    }
    let b_matched: Vec<char> = b.iter().zip(&taken).filter(|(_, &t)| t).map(|(&c, _)| c).collect();
    let half = a_matched.iter().zip(&b_matched).filter(|(x, y)| x != y).count();
    let m = m as f64;
    let j = (m / a.len() as f64 + m / b.len() as f64 + (m - half as f64 / 2.0) / m) / 3.0;
    let prefix = a.iter().zip(&b).take(4).take_while(|(x, y)| x == y).count();
    j + prefix as f64 * 0.1 * (1.0 - j)
}

fn word() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[abcAé -]{0,10}").unwrap()
}

#[test]
fn known_values() {
    assert!((jaro_winkler("MARTHA", "MARHTA") - 0.9611).abs() < 1e-3);
    assert!((jaro_winkler("DIXON", "DICKSONX") - 0.8133).abs() < 1e-3);
    assert!((levenshtein_ratio("kitten", "sitting") - 4.0 / 7.0).abs() < 1e-9);
    assert!((ratcliff_obershelp("WIKIMEDIA", "WIKIMANIA") - 14.0 / 18.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn levenshtein_matches_recursive_oracle(a in word(), b in word()) {
        let ac: Vec<char> = a.chars().collect();
        let bc: Vec<char> = b.chars().collect();
        prop_assert_eq!(levenshtein(&ac, &bc), edit_oracle(&ac, &bc));
    }

    #[test]
    fn gestalt_matches_brute_force(a in word(), b in word()) {
        prop_assert!((ratcliff_obershelp(&a, &b) - gestalt_oracle(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn jaro_winkler_matches_definition(a in word(), b in word()) {
        prop_assert!((jaro_winkler(&a, &b) - jaro_winkler_oracle(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn measures_are_symmetric_bounded_and_reflexive(a in word(), b in word()) {
        for f in [jaro_winkler, levenshtein_ratio, ratcliff_obershelp] {
            let ab = f(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - f(&b, &a)).abs() < 1e-12);
            prop_assert_eq!(f(&a, &a), 1.0);
        }
    }

    #[test]
    fn disjoint_alphabets_score_zero(a in "[abc]{1,8}", b in "[xyz]{1,8}") {
        prop_assert_eq!(levenshtein_ratio(&a, &b), 0.0);
        prop_assert_eq!(ratcliff_obershelp(&a, &b), 0.0);
        prop_assert_eq!(jaro_winkler(&a, &b), 0.0);
    }
}
