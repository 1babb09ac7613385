//! Accuracy, cross-validation folds, ablations and k-sweeps.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::CqaText;
use crate::error::{Error, Result};
use crate::pipeline::MentionInput;
use crate::ranker::{tally, train, EncodedMention, FeatureMask, RankerModel, Tally, TrainConfig, TrainOutcome};

pub const N_FOLDS: usize = 5;

/// Exact-match fraction over all mentions; `None` predictions are wrong.
pub fn accuracy<S: AsRef<str>>(predictions: &[Option<S>], golds: &[S]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Empty("no mentions to score".into()));
    }
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.as_ref().is_some_and(|p| p.as_ref() == g.as_ref()))
        .count();
    Ok(correct as f64 / golds.len() as f64)
}

/// CQA-text indices of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Five 70/10/20 splits of `n_texts` CQA texts whose test sets partition
/// the data. Deterministic in `seed`.
pub fn make_folds(n_texts: usize, seed: u64) -> Result<Vec<Fold>> {
    if n_texts < N_FOLDS {
        return Err(Error::InvalidArgument(format!(
            "{n_texts} CQA texts are too few for {N_FOLDS} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_texts).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = n_texts as f64;
    let bounds: Vec<usize> = (0..=N_FOLDS).map(|i| i * n_texts / N_FOLDS).collect();
    Ok((0..N_FOLDS)
        .map(|f| {
            let test: Vec<usize> = order[bounds[f]..bounds[f + 1]].to_vec();
            // the rest, starting right after the test block
            let rest: Vec<usize> = order[bounds[f + 1]..]
                .iter()
                .chain(&order[..bounds[f]])
                .copied()
                .collect();
            // pick the validation size that keeps the training size within
            // one text of 70%
            let test_gap = 0.2 * n - test.len() as f64;
            let v = 0.1 * n;
            let val_len = if test_gap < 0.0 { v.floor() } else { v.ceil() } as usize;
            let mut test_sorted = test;
            test_sorted.sort_unstable();
            let mut validation = rest[..val_len].to_vec();
            validation.sort_unstable();
            let mut train = rest[val_len..].to_vec();
            train.sort_unstable();
            Fold {
                train,
                validation,
                test: test_sorted,
            }
        })
        .collect())
}

/// Seed of fold `fold` under master seed `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64 + 1)
}

/// Test-set outcome of one trained model.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub fold: usize,
    pub mask: FeatureMask,
    pub k: usize,
    pub tally: Tally,
    pub accuracy: f64,
    /// Fraction of labeled test mentions whose gold is a candidate.
    pub recall_ceiling: f64,
    pub best_epoch: usize,
    pub excluded_train: usize,
}

/// Test-set tally of a trained model on the labeled mentions of `texts`.
pub fn score_texts(model: &RankerModel, dataset: &[CqaText], inputs: &[MentionInput], texts: &[usize]) -> Tally {
    let keep: std::collections::HashSet<usize> = texts.iter().copied().collect();
    let encoded: Vec<EncodedMention> = inputs
        .iter()
        .enumerate()
        .filter(|(_, i)| keep.contains(&i.text_index))
        .filter(|(_, i)| dataset[i.text_index].mentions[i.mention_index].gold.is_some())
        .map(|(n, i)| model.encode(n, i))
        .collect();
    let refs: Vec<&EncodedMention> = encoded.iter().collect();
    tally(model, &refs, &vec![true; refs.len()])
}

/// Trains on the fold's training texts, selects on validation, scores the
/// test texts. Returns the trained model alongside the result.
pub fn train_fold(
    dataset: &[CqaText],
    inputs: &[MentionInput],
    folds: &[Fold],
    fold: usize,
    config: &TrainConfig,
) -> Result<(TrainOutcome, CellResult)> {
    let f = folds
        .get(fold)
        .ok_or_else(|| Error::InvalidArgument(format!("no fold {fold}")))?;
    let outcome = train(dataset, inputs, &f.train, &f.validation, config)?;
    let t = score_texts(&outcome.model, dataset, inputs, &f.test);
    let cell = CellResult {
        fold,
        mask: config.model.mask,
        k: config.model.k,
        accuracy: t.accuracy(),
        recall_ceiling: if t.n_mentions == 0 {
            0.0
        } else {
            1.0 - t.n_gold_missing as f64 / t.n_mentions as f64
        },
        tally: t,
        best_epoch: outcome.best_epoch,
        excluded_train: outcome.excluded,
    };
    Ok((outcome, cell))
}

pub fn run_cell(dataset: &[CqaText], inputs: &[MentionInput], folds: &[Fold], fold: usize, config: &TrainConfig) -> Result<CellResult> {
    train_fold(dataset, inputs, folds, fold, config).map(|(_, cell)| cell)
}

/// One configuration across folds.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mask: FeatureMask,
    pub k: usize,
    pub cells: Vec<CellResult>,
    /// Per-fold failures as messages.
    pub errors: Vec<String>,
    /// Some fold's training diverged.
    pub diverged: bool,
    /// Mean test accuracy over successful folds.
    pub accuracy: f64,
    pub n_mentions: usize,
    pub n_correct: usize,
    pub n_unresolvable: usize,
    pub recall_ceiling: f64,
}

impl EvalReport {
    pub fn from_cells(mask: FeatureMask, k: usize, results: Vec<(usize, Result<CellResult>)>) -> Self {
        let mut cells = Vec::new();
        let mut errors = Vec::new();
        let mut diverged = false;
        for (fold, r) in results {
            match r {
                Ok(c) => cells.push(c),
                Err(e) => {
                    diverged |= matches!(e, Error::Divergence { .. });
                    errors.push(format!("fold {fold}: {e}"));
                }
            }
        }
        let mean = |f: &dyn Fn(&CellResult) -> f64| {
            if cells.is_empty() {
                f64::NAN
            } else {
                cells.iter().map(f).sum::<f64>() / cells.len() as f64
            }
        };
        Self {
            mask,
            k,
            accuracy: mean(&|c| c.accuracy),
            recall_ceiling: mean(&|c| c.recall_ceiling),
            n_mentions: cells.iter().map(|c| c.tally.n_mentions).sum(),
            n_correct: cells.iter().map(|c| c.tally.n_correct).sum(),
            n_unresolvable: cells.iter().map(|c| c.tally.n_unresolvable).sum(),
            cells,
            errors,
            diverged,
        }
    }

    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.accuracy).collect()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "features: {}  k: {}", self.mask, self.k)?;
        for c in &self.cells {
            writeln!(
                f,
                "  fold {}: accuracy {:.4} ({} / {}), unresolvable {}, recall ceiling {:.4}, best epoch {}",
                c.fold,
                c.accuracy,
                c.tally.n_correct,
                c.tally.n_mentions,
                c.tally.n_unresolvable,
                c.recall_ceiling,
                c.best_epoch
            )?;
        }
        for e in &self.errors {
            writeln!(f, "  {e}")?;
        }
        write!(
            f,
            "  mean accuracy {:.4} over {} folds, recall ceiling {:.4}",
            self.accuracy,
            self.cells.len(),
            self.recall_ceiling
        )
    }
}

/// Runs `config` on each listed fold, each with its own derived seed.
pub fn evaluate_config(
    dataset: &[CqaText],
    inputs: &[MentionInput],
    folds: &[Fold],
    fold_ids: &[usize],
    config: &TrainConfig,
) -> EvalReport {
    let results = fold_ids
        .iter()
        .map(|&fold| {
            let mut cfg = config.clone();
            cfg.seed = fold_seed(config.seed, fold);
            log::info!("features {} k {} fold {fold}", cfg.model.mask, cfg.model.k);
            (fold, run_cell(dataset, inputs, folds, fold, &cfg))
        })
        .collect();
    EvalReport::from_cells(config.model.mask, config.model.k, results)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub report: EvalReport,
    /// Mean accuracy minus that of the base row.
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Deltas against the base-mask row, or the first row without one.
    pub fn from_reports(reports: Vec<EvalReport>) -> Self {
        let base = reports
            .iter()
            .find(|r| r.mask == FeatureMask::base())
            .or(reports.first())
            .map_or(f64::NAN, |r| r.accuracy);
        Self {
            rows: reports
                .into_iter()
                .map(|report| AblationRow {
                    delta: report.accuracy - base,
                    report,
                })
                .collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("features\tmean_accuracy\tdelta\tfold_accuracies\n");
        for r in &self.rows {
            let folds: Vec<String> = r.report.fold_accuracies().iter().map(|a| format!("{a:.6}")).collect();
            out.push_str(&format!(
                "{}\t{:.6}\t{:+.6}\t{}\n",
                r.report.mask,
                r.report.accuracy,
                r.delta,
                folds.join(",")
            ));
        }
        out
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<36} {:>9} {:>9}", "features", "accuracy", "delta")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<36} {:>9.4} {:>+9.4}",
                r.report.mask.to_string(),
                r.report.accuracy,
                r.delta
            )?;
        }
        Ok(())
    }
}

/// One model per (fold, mask); inputs must carry at least `config.model.k`
/// selected texts per kind.
pub fn run_ablation(
    dataset: &[CqaText],
    inputs: &[MentionInput],
    folds: &[Fold],
    fold_ids: &[usize],
    config: &TrainConfig,
    masks: &[FeatureMask],
) -> Result<AblationTable> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("no feature masks given".into()));
    }
    let reports = masks
        .iter()
        .map(|&mask| {
            let mut cfg = config.clone();
            cfg.model.mask = mask;
            evaluate_config(dataset, inputs, folds, fold_ids, &cfg)
        })
        .collect();
    Ok(AblationTable::from_reports(reports))
}

#[derive(Debug, Clone, Serialize)]
pub struct KSweep {
    pub rows: Vec<EvalReport>,
}

impl KSweep {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("k\tmean_accuracy\tfold_accuracies\n");
        for r in &self.rows {
            let folds: Vec<String> = r.fold_accuracies().iter().map(|a| format!("{a:.6}")).collect();
            out.push_str(&format!("{}\t{:.6}\t{}\n", r.k, r.accuracy, folds.join(",")));
        }
        out
    }

    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.k == k).map(|r| r.accuracy)
    }
}

/// One full train/evaluate run per `k`; inputs must carry at least
/// `max(ks)` selected texts per kind.
pub fn sweep_k(
    dataset: &[CqaText],
    inputs: &[MentionInput],
    folds: &[Fold],
    fold_ids: &[usize],
    config: &TrainConfig,
    ks: &[usize],
) -> Result<KSweep> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument("no k values given".into()));
    }
    let rows = ks
        .iter()
        .map(|&k| {
            let mut cfg = config.clone();
            cfg.model.k = k;
            evaluate_config(dataset, inputs, folds, fold_ids, &cfg)
        })
        .collect();
    Ok(KSweep { rows })
}
