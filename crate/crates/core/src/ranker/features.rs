use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;

pub const N_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    Ctxt,
    Prior,
    AuxParallel,
    AuxTopic,
    AuxUser,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::Ctxt,
        Feature::Prior,
        Feature::AuxParallel,
        Feature::AuxTopic,
        Feature::AuxUser,
    ];

    pub const AUX: [Feature; 3] = [Feature::AuxParallel, Feature::AuxTopic, Feature::AuxUser];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Ctxt => "ctxt",
            Feature::Prior => "prior",
            Feature::AuxParallel => "parallel",
            Feature::AuxTopic => "topic",
            Feature::AuxUser => "user",
        }
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature {s:?}")))
    }
}

/// Which features enter the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMask(pub [bool; N_FEATURES]);

impl FeatureMask {
    /// Context similarity and prior only.
    pub fn base() -> Self {
        FeatureMask([true, true, false, false, false])
    }

    pub fn full() -> Self {
        FeatureMask([true; N_FEATURES])
    }

    pub fn with(mut self, f: Feature) -> Self {
        self.0[f.index()] = true;
        self
    }

    pub fn without(mut self, f: Feature) -> Self {
        self.0[f.index()] = false;
        self
    }

    pub fn has(&self, f: Feature) -> bool {
        self.0[f.index()]
    }

    pub fn any_aux(&self) -> bool {
        Feature::AUX.iter().any(|&f| self.has(f))
    }

    /// The rows of an ablation table: base, base plus each auxiliary kind,
    /// and all features.
    pub fn ablation_set() -> Vec<FeatureMask> {
        let mut masks = vec![FeatureMask::base()];
        masks.extend(Feature::AUX.iter().map(|&f| FeatureMask::base().with(f)));
        masks.push(FeatureMask::full());
        masks
    }
}

impl fmt::Display for FeatureMask {
    /// Comma-separated enabled feature names, e.g. `ctxt,prior,topic`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Feature::ALL
            .iter()
            .filter(|&&x| self.has(x))
            .map(|x| x.name())
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

impl FromStr for FeatureMask {
    type Err = Error;

    /// Accepts `base`, `full`, `none`, or a comma list of feature names.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "base" => return Ok(FeatureMask::base()),
            "full" | "all" => return Ok(FeatureMask::full()),
            "none" | "" => return Ok(FeatureMask([false; N_FEATURES])),
            _ => {}
        }
        let mut m = FeatureMask([false; N_FEATURES]);
        for part in s.split(',') {
            m = m.with(part.parse()?);
        }
        Ok(m)
    }
}

/// The five per-candidate features; masked entries are ignored by `fuse`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; N_FEATURES],
    pub mask: FeatureMask,
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.values[f.index()]
    }

    /// Values with masked entries zeroed.
    pub fn masked(&self) -> [f64; N_FEATURES] {
        let mut v = self.values;
        for (x, on) in v.iter_mut().zip(self.mask.0) {
            if !on {
                *x = 0.0;
            }
        }
        v
    }
}

/// Affine scoring layer over the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionLayer {
    pub weights: [f64; N_FEATURES],
    pub bias: f64,
}

impl FusionLayer {
    pub fn init(rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (N_FEATURES as f64).sqrt();
        let mut weights = [0.0; N_FEATURES];
        for w in &mut weights {
            *w = rng.gen_range(0.0..bound);
        }
        Self { weights, bias: 0.0 }
    }

    pub fn zeros() -> Self {
        Self {
            weights: [0.0; N_FEATURES],
            bias: 0.0,
        }
    }
}

impl Parameters for FusionLayer {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("fusion.weights", &self.weights);
        f("fusion.bias", std::slice::from_ref(&self.bias));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("fusion.weights", &mut self.weights);
        f("fusion.bias", std::slice::from_mut(&mut self.bias));
    }
}

/// s(m, e) = w . masked(features) + b.
pub fn fuse(fv: &FeatureVector, layer: &FusionLayer) -> f64 {
    fv.masked()
        .iter()
        .zip(&layer.weights)
        .map(|(x, w)| x * w)
        .sum::<f64>()
        + layer.bias
}

/// Softmax with max-shift.
pub fn normalize(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("cannot normalize an empty score list".into()));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the highest score, lowest index on ties; `None` when empty.
pub fn predict(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Cross-entropy of one mention: `-ln p[gold]`.
pub fn mention_loss(probs: &[f64], gold: usize) -> f64 {
    -probs[gold].ln()
}

/// Summed cross-entropy over `(probs, gold)` pairs. Pairs without gold are
/// excluded and counted; an all-excluded batch is an error.
pub fn loss(batch: &[(&[f64], Option<usize>)]) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut excluded = 0;
    for (probs, gold) in batch {
        match gold {
            Some(g) => total += mention_loss(probs, *g),
            None => excluded += 1,
        }
    }
    if excluded == batch.len() {
        return Err(Error::Empty("no mention in the batch has its gold candidate".into()));
    }
    Ok((total, excluded))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: [f64; 5], mask: FeatureMask) -> FeatureVector {
        FeatureVector { values, mask }
    }

    #[test]
    fn affine_fusion() {
        let layer = FusionLayer {
            weights: [1.0; 5],
            bias: 0.0,
        };
        assert_eq!(fuse(&fv([0.5, 0.5, 9.0, 9.0, 9.0], FeatureMask::base()), &layer), 1.0);
        let zero = FusionLayer {
            weights: [0.0; 5],
            bias: 0.3,
        };
        assert_eq!(fuse(&fv([1.0, 2.0, 3.0, 4.0, 5.0], FeatureMask::full()), &zero), 0.3);
    }

    #[test]
    fn masking_equals_zeroing() {
        let layer = FusionLayer {
            weights: [0.3, -1.2, 0.7, 2.0, 0.1],
            bias: 0.05,
        };
        let v = [0.4, 0.2, -1.0, 3.0, 0.5];
        let mut zeroed = v;
        zeroed[Feature::AuxTopic.index()] = 0.0;
        let masked = FeatureMask::full().without(Feature::AuxTopic);
        assert_eq!(
            fuse(&fv(v, masked), &layer),
            fuse(&fv(zeroed, FeatureMask::full()), &layer)
        );
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(normalize(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = normalize(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(normalize(&[]).is_err());
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(predict(&[0.2, 0.7, 0.1]), Some(1));
        assert_eq!(predict(&[0.5, 0.5]), Some(0));
        assert_eq!(predict(&[]), None);
    }

    #[test]
    fn loss_examples() {
        let certain = [1.0, 0.0];
        let uniform = [0.5, 0.5];
        assert_eq!(loss(&[(&certain, Some(0))]).unwrap().0, 0.0);
        let (l, excluded) = loss(&[(&uniform, Some(1)), (&uniform, None)]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(excluded, 1);
        assert!(loss(&[(&uniform, None)]).is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        for m in FeatureMask::ablation_set() {
            assert_eq!(m.to_string().parse::<FeatureMask>().unwrap(), m);
        }
        assert_eq!("base".parse::<FeatureMask>().unwrap().to_string(), "ctxt,prior");
        assert!("ctxt,bogus".parse::<FeatureMask>().is_err());
    }
}
