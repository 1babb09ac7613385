//! Dictionary-based candidate generation.

use serde::Serialize;

use crate::corpus::{CqaText, Mention};
use crate::error::{Error, Result};
use crate::index::AliasIndex;

pub const DEFAULT_N_MAX: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub entity: String,
    /// Global p(e|m) from the alias index, not renormalized after pruning.
    pub prior: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSet {
    pub surface: String,
    pub candidates: Vec<Candidate>,
    pub gold_index: Option<usize>,
    /// The surface is not in the alias index.
    pub unresolvable: bool,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

pub fn generate_candidates(mention: &Mention, index: &AliasIndex, n_max: usize) -> CandidateSet {
    assert!(n_max >= 1, "n_max must be at least 1");
    let candidates: Vec<Candidate> = index
        .lookup(&mention.surface)
        .iter()
        .take(n_max)
        .map(|e| Candidate {
            entity: e.entity.clone(),
            prior: e.prior,
            description: index.description(&e.entity).unwrap_or_default().to_string(),
        })
        .collect();
    let gold_index = mention
        .gold
        .as_ref()
        .and_then(|g| candidates.iter().position(|c| &c.entity == g));
    CandidateSet {
        surface: mention.surface.clone(),
        unresolvable: candidates.is_empty(),
        candidates,
        gold_index,
    }
}

/// Fraction of gold-labeled mentions whose candidate set holds the gold
/// entity. `n_max = None` keeps every alias-table entry.
pub fn candidate_recall(dataset: &[CqaText], index: &AliasIndex, n_max: Option<usize>) -> Result<f64> {
    let n_max = n_max.unwrap_or(usize::MAX);
    let (hits, labeled) = dataset
        .iter()
        .flat_map(|z| z.mentions.iter())
        .filter(|m| m.gold.is_some())
        .fold((0usize, 0usize), |(h, n), m| {
            let hit = generate_candidates(m, index, n_max).gold_index.is_some();
            (h + hit as usize, n + 1)
        });
    if labeled == 0 {
        return Err(Error::Empty("no gold-labeled mentions".into()));
    }
    Ok(hits as f64 / labeled as f64)
}
