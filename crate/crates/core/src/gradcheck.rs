//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoder::{AttentionPattern, EncoderConfig, EncoderParams, Limits, MentionWindow, Sequence, Tokenizer};
use crate::params::Parameters;
use crate::ranker::{FeatureMask, ModelConfig, RankerModel};
use crate::selection::SelectionConfig;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-3;
/// Gradients smaller than this in magnitude are compared absolutely.
pub const FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter (tensor name and offset) with the largest error.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

fn nudge<P: Parameters>(params: &mut P, index: usize, delta: f64) {
    let mut off = 0;
    params.visit_mut(&mut |_, t| {
        if index >= off && index < off + t.len() {
            t[index - off] += delta;
        }
        off += t.len();
    });
}

fn location<P: Parameters>(params: &P, index: usize) -> String {
    let mut off = 0;
    let mut out = String::new();
    params.visit(&mut |name, t| {
        if out.is_empty() && index < off + t.len() {
            out = format!("{name}[{}]", index - off);
        }
        off += t.len();
    });
    out
}

/// Compares `analytic` against central differences of `f` at every
/// coordinate of `params`.
pub fn check<P, F>(name: &str, params: &P, analytic: &P, mut f: F, h: f64) -> GradCheckReport
where
    P: Parameters + Clone,
    F: FnMut(&P) -> f64,
{
    let grad = analytic.flatten();
    let mut p = params.clone();
    let mut report = GradCheckReport {
        name: name.to_string(),
        checked: grad.len(),
        max_rel_error: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
    };
    for (i, &a) in grad.iter().enumerate() {
        nudge(&mut p, i, h);
        let plus = f(&p);
        nudge(&mut p, i, -2.0 * h);
        let minus = f(&p);
        nudge(&mut p, i, h);
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = err;
            report.worst = location(params, i);
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    report
}

fn random_sequence(rng: &mut impl Rng, vocab: usize, n: usize, pattern: AttentionPattern) -> Sequence {
    let split = rng.gen_range(1..n);
    Sequence {
        ids: (0..n).map(|_| rng.gen_range(0..vocab)).collect(),
        segments: (0..n).map(|i| usize::from(i >= split)).collect(),
        pattern,
    }
}

/// Gradient of a single encoder score.
pub fn check_encoder(config: EncoderConfig, pattern: AttentionPattern, len: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EncoderParams::init(EncoderConfig { dropout: 0.0, ..config }, &mut rng);
    let seq = random_sequence(&mut rng, config.vocab_size, len, pattern);
    let (_, cache) = params.forward(&seq, None::<&mut ChaCha8Rng>);
    let mut grads = params.zeros_like();
    params.backward(&seq, &cache, 1.0, &mut grads);
    let name = if seq.pattern == AttentionPattern::Dense {
        "context encoder"
    } else {
        "auxiliary encoder"
    };
    check(name, &params, &grads, |p| p.score(&seq), STEP)
}

/// A model with both encoders and the fusion layer under 5k parameters
/// and one mention with three candidates.
pub fn tiny_model(seed: u64) -> (RankerModel, crate::ranker::EncodedMention) {
    use crate::candidates::{Candidate, CandidateSet};
    use crate::pipeline::MentionInput;
    use crate::selection::ScoredText;

    let words = ["alpha", "beta", "gamma", "delta", "sport", "music", "river", "stone", "orbit"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phrase = |n: usize| -> String {
        (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ")
    };
    let scored = |t: String| ScoredText {
        text: t,
        score: 0.0,
        source_rank: 0,
        components: [0.0; 3],
    };
    let input = MentionInput {
        text_index: 0,
        mention_index: 0,
        candidates: CandidateSet {
            surface: "jordan".into(),
            candidates: (0..3)
                .map(|i| Candidate {
                    entity: format!("e{i}"),
                    prior: [0.5, 0.3, 0.2][i],
                    description: phrase(5),
                })
                .collect(),
            gold_index: Some(1),
            unresolvable: false,
        },
        window: MentionWindow {
            before: phrase(3) + " ",
            surface: "jordan".into(),
            after: " ".to_string() + &phrase(3),
        },
        selected: [
            vec![scored(phrase(4)), scored(phrase(3))],
            vec![scored(phrase(5))],
            vec![scored(phrase(2)), scored(phrase(4))],
        ],
    };
    let tok = Tokenizer::learn(words.iter().copied().chain(["jordan"]), 32);
    let config = ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 8,
        dropout: 0.0,
        vocab_max: 32,
        limits: Limits {
            context: 8,
            pair_total: 16,
            aux_description: 6,
            aux_text: 5,
            aux_total: 32,
            window: 8,
        },
        k: 2,
        n_max: 3,
        mask: FeatureMask::full(),
        selection: SelectionConfig::default(),
    };
    let model = RankerModel::init(config, tok, &mut rng).expect("valid tiny config");
    let encoded = model.encode(0, &input);
    (model, encoded)
}

/// Gradient of the cross-entropy loss with respect to every parameter of
/// both encoders and the fusion layer.
pub fn check_model(seed: u64) -> GradCheckReport {
    let (model, m) = tiny_model(seed);
    let mut grads = model.weights.zeros_like();
    model.loss_and_grad(&m, None::<&mut ChaCha8Rng>, &mut grads);
    let gold = m.gold.expect("tiny mention has gold");
    let mut probe = model.clone();
    check(
        "full model",
        &model.weights,
        &grads,
        |w| {
            probe.weights.clone_from(w);
            let scores = probe.scores(&m);
            let probs = crate::ranker::normalize(&scores).expect("candidates");
            -probs[gold].ln()
        },
        STEP,
    )
}

/// The standard battery: dense and windowed encoders and the full model.
pub fn run_all(seed: u64) -> Vec<GradCheckReport> {
    let cfg = EncoderConfig {
        vocab_size: 20,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        max_positions: 32,
        dropout: 0.0,
    };
    let two_layer = EncoderConfig { n_layers: 2, ..cfg };
    vec![
        check_encoder(cfg, AttentionPattern::Dense, 12, seed),
        check_encoder(two_layer, AttentionPattern::Dense, 10, seed + 1),
        check_encoder(cfg, AttentionPattern::windowed(4, vec![0]), 20, seed + 2),
        check_encoder(two_layer, AttentionPattern::windowed(6, vec![0]), 24, seed + 3),
        check_model(seed + 4),
    ]
}
