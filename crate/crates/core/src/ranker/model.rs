//! The full linking model: two cross-encoders plus the fusion layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{fuse, normalize, Feature, FeatureMask, FeatureVector, FusionLayer, N_FEATURES};
use crate::candidates::DEFAULT_N_MAX;
use crate::encoder::{aux_sequence, context_pair, EncoderConfig, EncoderParams, ForwardCache, Limits, Sequence, Tokenizer};
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::pipeline::MentionInput;
use crate::selection::SelectionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Vocabulary cap including the special tokens.
    pub vocab_max: usize,
    pub limits: Limits,
    /// Useful texts kept per auxiliary kind.
    pub k: usize,
    pub n_max: usize,
    pub mask: FeatureMask,
    pub selection: SelectionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            dropout: 0.1,
            vocab_max: 8000,
            limits: Limits::default(),
            k: 3,
            n_max: DEFAULT_N_MAX,
            mask: FeatureMask::full(),
            selection: SelectionConfig::default(),
        }
    }
}

impl ModelConfig {
    fn encoder(&self, vocab_size: usize, max_positions: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_positions,
            dropout: self.dropout,
        }
    }

    pub fn context_encoder(&self, vocab_size: usize) -> EncoderConfig {
        self.encoder(vocab_size, self.limits.pair_total)
    }

    pub fn aux_encoder(&self, vocab_size: usize) -> EncoderConfig {
        self.encoder(vocab_size, self.limits.aux_total)
    }

    pub fn validate(&self) -> Result<()> {
        self.context_encoder(self.vocab_max).validate()?;
        let l = &self.limits;
        if l.context < 8 {
            return Err(Error::Config("context budget must be at least 8 tokens".into()));
        }
        if l.pair_total < l.context + 3 || l.aux_total < l.aux_description + 6 || l.window == 0 {
            return Err(Error::Config("inconsistent sequence limits".into()));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// All trainable parameters. The score vector of `ctx` is w1, that of
/// `aux` is w2; one auxiliary encoder serves all three kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub ctx: EncoderParams,
    pub aux: EncoderParams,
    pub fusion: FusionLayer,
}

impl Weights {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

impl Parameters for Weights {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.ctx.visit(&mut |n, t| f(&format!("ctx.{n}"), t));
        self.aux.visit(&mut |n, t| f(&format!("aux.{n}"), t));
        self.fusion.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.ctx.visit_mut(&mut |n, t| f(&format!("ctx.{n}"), t));
        self.aux.visit_mut(&mut |n, t| f(&format!("aux.{n}"), t));
        self.fusion.visit_mut(f);
    }
}

/// Token sequences of one mention, built once per tokenizer.
#[derive(Debug, Clone)]
pub struct EncodedMention {
    /// Index into the `MentionInput` list this was built from.
    pub input: usize,
    pub gold: Option<usize>,
    pub priors: Vec<f64>,
    /// `[CLS] C [SEP] D [SEP]` per candidate.
    pub ctx: Vec<Sequence>,
    /// Auxiliary sequence per candidate and kind (parallel, topic, user).
    pub aux: Vec<[Sequence; 3]>,
}

impl EncodedMention {
    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }
}

/// Forward state of one mention kept for the backward pass.
pub struct MentionPass {
    pub features: Vec<FeatureVector>,
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    ctx: Vec<Option<ForwardCache>>,
    aux: Vec<[Option<ForwardCache>; 3]>,
    /// Encoder invocations made.
    pub encoder_calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel {
    pub config: ModelConfig,
    pub tokenizer: Tokenizer,
    pub weights: Weights,
}

impl RankerModel {
    pub fn init(config: ModelConfig, tokenizer: Tokenizer, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let v = tokenizer.len();
        let ctx = EncoderParams::init(config.context_encoder(v), rng);
        let aux = EncoderParams::init(config.aux_encoder(v), rng);
        let fusion = FusionLayer::init(rng);
        Ok(Self {
            config,
            tokenizer,
            weights: Weights { ctx, aux, fusion },
        })
    }

    /// Builds the encoder inputs of one mention with this model's
    /// tokenizer, limits and `k`.
    pub fn encode(&self, input_index: usize, input: &MentionInput) -> EncodedMention {
        let limits = &self.config.limits;
        let context = input.window.marked();
        let k = self.config.k;
        let texts: [Vec<&str>; 3] = std::array::from_fn(|kind| {
            input.selected[kind].iter().take(k).map(|s| s.text.as_str()).collect()
        });
        let cands = &input.candidates.candidates;
        EncodedMention {
            input: input_index,
            gold: input.candidates.gold_index,
            priors: cands.iter().map(|c| c.prior).collect(),
            ctx: cands
                .iter()
                .map(|c| context_pair(&self.tokenizer, &context, &c.description, limits))
                .collect(),
            aux: cands
                .iter()
                .map(|c| std::array::from_fn(|kind| aux_sequence(&self.tokenizer, &c.description, &texts[kind], limits)))
                .collect(),
        }
    }

    /// Features, fused scores and probabilities of one mention. Masked
    /// features skip their encoder. Dropout is on iff `rng` is given.
    pub fn forward<R: Rng>(&self, m: &EncodedMention, mut rng: Option<&mut R>) -> MentionPass {
        let mask = self.config.mask;
        let w = &self.weights;
        let mut features = Vec::with_capacity(m.len());
        let mut ctx_caches = Vec::with_capacity(m.len());
        let mut aux_caches = Vec::with_capacity(m.len());
        let mut calls = 0;
        for i in 0..m.len() {
            let mut values = [0.0; N_FEATURES];
            values[Feature::Prior.index()] = m.priors[i];
            let ctx = mask.has(Feature::Ctxt).then(|| {
                calls += 1;
                let (s, cache) = w.ctx.forward(&m.ctx[i], rng.as_deref_mut());
                values[Feature::Ctxt.index()] = s;
                cache
            });
            let aux: [Option<ForwardCache>; 3] = std::array::from_fn(|kind| {
                let f = Feature::AUX[kind];
                mask.has(f).then(|| {
                    calls += 1;
                    let (s, cache) = w.aux.forward(&m.aux[i][kind], rng.as_deref_mut());
                    values[f.index()] = s;
                    cache
                })
            });
            features.push(FeatureVector { values, mask });
            ctx_caches.push(ctx);
            aux_caches.push(aux);
        }
        let scores: Vec<f64> = features.iter().map(|fv| fuse(fv, &w.fusion)).collect();
        let probs = if scores.is_empty() {
            Vec::new()
        } else {
            normalize(&scores).expect("nonempty")
        };
        MentionPass {
            features,
            scores,
            probs,
            ctx: ctx_caches,
            aux: aux_caches,
            encoder_calls: calls,
        }
    }

    /// Scores without dropout or caches kept beyond the call.
    pub fn scores(&self, m: &EncodedMention) -> Vec<f64> {
        self.forward(m, None::<&mut rand_chacha::ChaCha8Rng>).scores
    }

    /// Cross-entropy of the gold candidate and its gradient, accumulated
    /// into `grads`. Returns `None` when the gold is not a candidate.
    pub fn loss_and_grad<R: Rng>(&self, m: &EncodedMention, rng: Option<&mut R>, grads: &mut Weights) -> Option<f64> {
        let gold = m.gold?;
        let pass = self.forward(m, rng);
        let loss = -pass.probs[gold].ln();
        self.backward(m, &pass, gold, grads);
        Some(loss)
    }

    pub fn backward(&self, m: &EncodedMention, pass: &MentionPass, gold: usize, grads: &mut Weights) {
        let w = &self.weights;
        for i in 0..m.len() {
            let ds = pass.probs[i] - if i == gold { 1.0 } else { 0.0 };
            let x = pass.features[i].masked();
            for (g, xv) in grads.fusion.weights.iter_mut().zip(x) {
                *g += ds * xv;
            }
            grads.fusion.bias += ds;
            if let Some(cache) = &pass.ctx[i] {
                let d = ds * w.fusion.weights[Feature::Ctxt.index()];
                w.ctx.backward(&m.ctx[i], cache, d, &mut grads.ctx);
            }
            for (kind, cache) in pass.aux[i].iter().enumerate() {
                if let Some(cache) = cache {
                    let d = ds * w.fusion.weights[Feature::AUX[kind].index()];
                    w.aux.backward(&m.aux[i][kind], cache, d, &mut grads.aux);
                }
            }
        }
    }
}
