//! Training: end-to-end over both encoders and the fusion layer, or over
//! the fusion layer alone on precomputed features.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{fuse, normalize, predict, FeatureVector, FusionLayer};
use super::model::{EncodedMention, ModelConfig, RankerModel};
use super::optim::{AdamW, AdamWConfig};
use crate::corpus::CqaText;
use crate::encoder::Tokenizer;
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::pipeline::MentionInput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    /// CQA texts per mini-batch.
    pub batch_texts: usize,
    pub optimizer: AdamWConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 10,
            batch_texts: 2,
            optimizer: AdamWConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
    pub val_accuracy: Option<f64>,
    pub seconds: f64,
}

pub struct TrainOutcome {
    pub model: RankerModel,
    pub history: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    /// Labeled training mentions whose gold is not among the candidates.
    pub excluded: usize,
}

/// Correct / total over labeled mentions; unresolvable ones count as wrong.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub n_mentions: usize,
    pub n_correct: usize,
    pub n_unresolvable: usize,
    /// Mentions whose candidate set misses the gold entity.
    pub n_gold_missing: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.n_mentions == 0 {
            0.0
        } else {
            self.n_correct as f64 / self.n_mentions as f64
        }
    }
}

/// Evaluates labeled mentions only (`labeled[i]` says whether `encoded[i]`
/// carries a gold label).
pub fn tally(model: &RankerModel, encoded: &[&EncodedMention], labeled: &[bool]) -> Tally {
    let preds: Vec<Option<usize>> = encoded.par_iter().map(|m| predict(&model.scores(m))).collect();
    let mut t = Tally::default();
    for ((m, p), &lab) in encoded.iter().zip(preds).zip(labeled) {
        if !lab {
            continue;
        }
        t.n_mentions += 1;
        t.n_unresolvable += usize::from(m.is_empty());
        t.n_gold_missing += usize::from(m.gold.is_none());
        t.n_correct += usize::from(p.is_some() && p == m.gold);
    }
    t
}

/// Vocabulary from the given CQA texts (all of their fields) and the
/// descriptions of their mentions' candidates.
pub fn learn_tokenizer(dataset: &[CqaText], inputs: &[MentionInput], texts: &[usize], vocab_max: usize) -> Tokenizer {
    let keep: std::collections::HashSet<usize> = texts.iter().copied().collect();
    let mut corpus: Vec<&str> = Vec::new();
    for &t in texts {
        let z = &dataset[t];
        corpus.push(&z.question);
        corpus.extend(z.answers.iter().map(|a| a.text.as_str()));
        corpus.extend(z.topic_questions());
        corpus.extend(z.users.values().flat_map(|u| u.questions.iter().map(String::as_str)));
    }
    for input in inputs.iter().filter(|i| keep.contains(&i.text_index)) {
        corpus.extend(input.candidates.candidates.iter().map(|c| c.description.as_str()));
    }
    Tokenizer::learn(corpus, vocab_max)
}

fn group_by_text<'a>(encoded: &'a [EncodedMention], inputs: &[MentionInput]) -> BTreeMap<usize, Vec<&'a EncodedMention>> {
    let mut map: BTreeMap<usize, Vec<&EncodedMention>> = BTreeMap::new();
    for e in encoded {
        map.entry(inputs[e.input].text_index).or_default().push(e);
    }
    map
}

fn is_labeled(dataset: &[CqaText], input: &MentionInput) -> bool {
    dataset[input.text_index].mentions[input.mention_index].gold.is_some()
}

/// Trains a model on the mentions of `train_texts`, keeping the weights of
/// the epoch with the best accuracy on `val_texts` (the last epoch when
/// there is no validation text).
pub fn train(
    dataset: &[CqaText],
    inputs: &[MentionInput],
    train_texts: &[usize],
    val_texts: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_texts.is_empty() {
        return Err(Error::Empty("training split is empty".into()));
    }
    if config.epochs == 0 || config.batch_texts == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    let tokenizer = learn_tokenizer(dataset, inputs, train_texts, config.model.vocab_max);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = RankerModel::init(config.model.clone(), tokenizer, &mut rng)?;
    train_model(&mut model, dataset, inputs, train_texts, val_texts, config, &mut rng)
}

/// Continues training an initialized model.
pub fn train_model(
    model: &mut RankerModel,
    dataset: &[CqaText],
    inputs: &[MentionInput],
    train_texts: &[usize],
    val_texts: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    let in_split = |texts: &[usize]| {
        let set: std::collections::HashSet<usize> = texts.iter().copied().collect();
        inputs
            .iter()
            .enumerate()
            .filter(|(_, i)| set.contains(&i.text_index) && is_labeled(dataset, i))
            .map(|(n, i)| model.encode(n, i))
            .collect::<Vec<_>>()
    };
    let train_enc = in_split(train_texts);
    let val_enc = in_split(val_texts);
    let excluded = train_enc.iter().filter(|m| m.gold.is_none()).count();
    if excluded > 0 {
        log::warn!("{excluded} training mentions excluded: gold entity not among candidates");
    }
    let by_text = group_by_text(&train_enc, inputs);
    // texts with at least one trainable mention
    let mut order: Vec<usize> = by_text
        .iter()
        .filter(|(_, ms)| ms.iter().any(|m| m.gold.is_some()))
        .map(|(&t, _)| t)
        .collect();
    if order.is_empty() {
        return Err(Error::Empty("no training mention has its gold entity among the candidates".into()));
    }
    let per_epoch = order.len().div_ceil(config.batch_texts);
    let total = per_epoch * config.epochs;
    let mut opt = AdamW::new(config.optimizer, model.weights.num_params(), total);
    let val_refs: Vec<&EncodedMention> = val_enc.iter().collect();
    let val_labeled = vec![true; val_refs.len()];

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, super::model::Weights)> = None;
    let mut grads = model.weights.zeros_like();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut n_loss = 0usize;
        for (b, batch) in order.chunks(config.batch_texts).enumerate() {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for t in batch {
                for m in &by_text[t] {
                    if let Some(l) = model.loss_and_grad(m, Some(&mut *rng), &mut grads) {
                        batch_loss += l;
                        n_loss += 1;
                    }
                }
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: (epoch - 1) * per_epoch + b,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss;
            opt.step(&mut model.weights, &grads);
        }
        let val_accuracy = (!val_refs.is_empty()).then(|| tally(model, &val_refs, &val_labeled).accuracy());
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / n_loss.max(1) as f64,
            steps: per_epoch,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, val acc {}, {:.1}s",
            stats.mean_loss,
            val_accuracy.map_or("-".to_string(), |a| format!("{a:.4}")),
            stats.seconds
        );
        history.push(stats);
        let score = val_accuracy.unwrap_or(epoch as f64);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.weights.clone()));
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch");
    model.weights = weights;
    Ok(TrainOutcome {
        model: model.clone(),
        history,
        best_epoch,
        excluded,
    })
}

/// Features of one mention under frozen encoders, with its gold index.
#[derive(Debug, Clone)]
pub struct FrozenMention {
    pub features: Vec<FeatureVector>,
    pub gold: Option<usize>,
}

pub fn precompute_features(model: &RankerModel, encoded: &[EncodedMention]) -> Vec<FrozenMention> {
    encoded
        .par_iter()
        .map(|m| FrozenMention {
            features: model.forward(m, None::<&mut ChaCha8Rng>).features,
            gold: m.gold,
        })
        .collect()
}

/// Summed cross-entropy over mentions with gold, and its gradient.
pub fn fusion_loss_and_grad(layer: &FusionLayer, data: &[FrozenMention]) -> (f64, FusionLayer) {
    let mut grad = FusionLayer::zeros();
    let mut loss = 0.0;
    for m in data {
        let Some(gold) = m.gold else { continue };
        let scores: Vec<f64> = m.features.iter().map(|f| fuse(f, layer)).collect();
        let probs = normalize(&scores).expect("gold implies candidates");
        loss -= probs[gold].ln();
        for (i, (fv, p)) in m.features.iter().zip(&probs).enumerate() {
            let ds = p - if i == gold { 1.0 } else { 0.0 };
            for (g, x) in grad.weights.iter_mut().zip(fv.masked()) {
                *g += ds * x;
            }
            grad.bias += ds;
        }
    }
    (loss, grad)
}

pub fn fusion_accuracy(layer: &FusionLayer, data: &[FrozenMention]) -> f64 {
    let labeled: Vec<&FrozenMention> = data.iter().filter(|m| m.gold.is_some()).collect();
    if labeled.is_empty() {
        return 0.0;
    }
    let correct = labeled
        .iter()
        .filter(|m| {
            let scores: Vec<f64> = m.features.iter().map(|f| fuse(f, layer)).collect();
            predict(&scores) == m.gold
        })
        .count();
    correct as f64 / labeled.len() as f64
}

/// Full-batch training of the fusion layer alone. Returns the loss before
/// each step followed by the final loss (`steps + 1` values).
pub fn train_fusion(layer: &mut FusionLayer, data: &[FrozenMention], steps: usize, optimizer: AdamWConfig) -> Result<Vec<f64>> {
    if !data.iter().any(|m| m.gold.is_some()) {
        return Err(Error::Empty("no mention has its gold entity among the candidates".into()));
    }
    let mut opt = AdamW::new(optimizer, layer.num_params(), steps);
    let mut losses = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let (loss, grad) = fusion_loss_and_grad(layer, data);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch: 1, step, loss });
        }
        losses.push(loss);
        opt.step(layer, &grad);
    }
    losses.push(fusion_loss_and_grad(layer, data).0);
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranker::{Feature, FeatureMask};

    fn separable() -> Vec<FrozenMention> {
        // gold has the largest prior; ctxt is noise
        (0..20)
            .map(|i| {
                let gold = i % 3;
                let features = (0..3)
                    .map(|c| {
                        let mut values = [0.0; 5];
                        values[Feature::Prior.index()] = if c == gold { 0.6 } else { 0.2 };
                        values[Feature::Ctxt.index()] = ((i * 7 + c * 3) % 5) as f64 * 0.1;
                        FeatureVector {
                            values,
                            mask: FeatureMask::base(),
                        }
                    })
                    .collect();
                FrozenMention {
                    features,
                    gold: Some(gold),
                }
            })
            .collect()
    }

    #[test]
    fn fusion_training_separates() {
        let data = separable();
        let mut layer = FusionLayer::zeros();
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let losses = train_fusion(&mut layer, &data, 200, cfg).unwrap();
        assert!(losses[1] < losses[0]);
        assert_eq!(fusion_accuracy(&layer, &data), 1.0);
    }

    #[test]
    fn fusion_gradient_matches_differences() {
        let data = separable();
        let layer = FusionLayer {
            weights: [0.3, -0.4, 0.2, 0.1, -0.5],
            bias: 0.1,
        };
        let (_, grad) = fusion_loss_and_grad(&layer, &data);
        let flat = layer.flatten();
        let g = grad.flatten();
        for i in 0..flat.len() {
            let h = 1e-5;
            let mut plus = layer.clone();
            let mut minus = layer.clone();
            let mut p = flat.clone();
            p[i] += h;
            plus.assign_flat(&p);
            p[i] -= 2.0 * h;
            minus.assign_flat(&p);
            let fd = (fusion_loss_and_grad(&plus, &data).0 - fusion_loss_and_grad(&minus, &data).0) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", g[i]);
        }
    }

    #[test]
    fn tally_counts() {
        let t = Tally {
            n_mentions: 4,
            n_correct: 3,
            n_unresolvable: 1,
            n_gold_missing: 1,
        };
        assert_eq!(t.accuracy(), 0.75);
        assert_eq!(Tally::default().accuracy(), 0.0);
    }
}
