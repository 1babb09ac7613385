//! Per-mention flow: context window, candidates, useful-text selection per
//! auxiliary kind, encoder scoring, fusion and prediction.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::candidates::{generate_candidates, CandidateSet};
use crate::corpus::{CqaText, Mention};
use crate::encoder::{mention_window, MentionWindow};
use crate::error::{Error, Result};
use crate::index::AliasIndex;
use crate::ranker::{predict, Feature, RankerModel};
use crate::selection::{select_useful_texts, ScoredText, SelectionConfig};

/// Auxiliary kinds in feature order.
pub const AUX_KINDS: [&str; 3] = ["parallel", "topic", "user"];

/// Raw auxiliary texts of a mention: parallel answers, pooled topic
/// questions, user questions.
pub fn aux_texts<'a>(z: &'a CqaText, m: &Mention) -> Result<[Vec<&'a str>; 3]> {
    Ok([z.parallel_texts(m.unit)?, z.topic_questions(), z.user_questions(m.unit)])
}

/// Everything about a mention that does not depend on model weights.
#[derive(Debug, Clone, Serialize)]
pub struct MentionInput {
    pub text_index: usize,
    pub mention_index: usize,
    pub candidates: CandidateSet,
    pub window: MentionWindow,
    /// Top useful texts per kind, best first.
    pub selected: [Vec<ScoredText>; 3],
}

/// Builds the input of one mention, keeping the top `k` texts per kind.
pub fn prepare_mention(
    z: &CqaText,
    text_index: usize,
    mention_index: usize,
    index: &AliasIndex,
    context_budget: usize,
    k: usize,
    n_max: usize,
    selection: &SelectionConfig,
) -> Result<MentionInput> {
    let m = z
        .mentions
        .get(mention_index)
        .ok_or_else(|| Error::InvalidArgument(format!("{}: no mention {mention_index}", z.id)))?;
    let window = mention_window(z, m, context_budget);
    let context = window.plain();
    let texts = aux_texts(z, m)?;
    let selected = texts.map(|t| select_useful_texts(&context, &t, k, selection));
    Ok(MentionInput {
        text_index,
        mention_index,
        candidates: generate_candidates(m, index, n_max),
        window,
        selected,
    })
}

/// Inputs for every mention of `dataset`, in dataset order.
pub fn prepare_corpus(
    dataset: &[CqaText],
    index: &AliasIndex,
    context_budget: usize,
    k: usize,
    n_max: usize,
    selection: &SelectionConfig,
) -> Result<Vec<MentionInput>> {
    let jobs: Vec<(usize, usize)> = dataset
        .iter()
        .enumerate()
        .flat_map(|(t, z)| (0..z.mentions.len()).map(move |m| (t, m)))
        .collect();
    jobs.par_iter()
        .map(|&(t, m)| prepare_mention(&dataset[t], t, m, index, context_budget, k, n_max, selection))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateDiagnostics {
    pub entity: String,
    pub prior: f64,
    pub s_ctxt: Option<f64>,
    pub s_aux_parallel: Option<f64>,
    pub s_aux_topic: Option<f64>,
    pub s_aux_user: Option<f64>,
    pub score: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub text_id: String,
    pub surface: String,
    pub context: String,
    pub selected: [Vec<ScoredText>; 3],
    pub candidates: Vec<CandidateDiagnostics>,
    pub encoder_calls: usize,
    pub gold: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkResult {
    /// `None` when the mention is unresolvable.
    pub entity: Option<String>,
    pub diagnostics: Diagnostics,
}

/// A mention to link. Budgets, k, n_max and the feature mask come from
/// the model configuration.
pub struct LinkRequest<'a> {
    pub text: &'a CqaText,
    pub mention_index: usize,
}

/// Links one mention with the model's own configuration.
pub fn link_mention(req: &LinkRequest, index: &AliasIndex, model: &RankerModel) -> Result<LinkResult> {
    let cfg = &model.config;
    let input = prepare_mention(
        req.text,
        0,
        req.mention_index,
        index,
        cfg.limits.context,
        cfg.k,
        cfg.n_max,
        &cfg.selection,
    )?;
    Ok(link_input(req.text, &input, model))
}

/// Scores a prepared input.
pub fn link_input(z: &CqaText, input: &MentionInput, model: &RankerModel) -> LinkResult {
    let encoded = model.encode(0, input);
    let pass = model.forward(&encoded, None::<&mut rand_chacha::ChaCha8Rng>);
    let mask = model.config.mask;
    let on = |f: Feature, v: f64| mask.has(f).then_some(v);
    let candidates = input
        .candidates
        .candidates
        .iter()
        .zip(&pass.features)
        .zip(pass.scores.iter().zip(&pass.probs))
        .map(|((c, fv), (&score, &probability))| CandidateDiagnostics {
            entity: c.entity.clone(),
            prior: c.prior,
            s_ctxt: on(Feature::Ctxt, fv.get(Feature::Ctxt)),
            s_aux_parallel: on(Feature::AuxParallel, fv.get(Feature::AuxParallel)),
            s_aux_topic: on(Feature::AuxTopic, fv.get(Feature::AuxTopic)),
            s_aux_user: on(Feature::AuxUser, fv.get(Feature::AuxUser)),
            score,
            probability,
        })
        .collect();
    let k = model.config.k;
    let m = &z.mentions[input.mention_index];
    LinkResult {
        entity: predict(&pass.scores).map(|i| input.candidates.candidates[i].entity.clone()),
        diagnostics: Diagnostics {
            text_id: z.id.clone(),
            surface: m.surface.clone(),
            context: input.window.marked(),
            selected: input.selected.clone().map(|mut v| {
                v.truncate(k);
                v
            }),
            candidates,
            encoder_calls: pass.encoder_calls,
            gold: m.gold.clone(),
        },
    }
}

/// Counts and throughput of a corpus run.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub n_mentions: usize,
    pub n_labeled: usize,
    pub n_correct: usize,
    pub n_unresolvable: usize,
    /// Correct over labeled mentions.
    pub accuracy: f64,
    pub failures: Vec<String>,
    pub seconds: f64,
    pub mentions_per_second: f64,
}

/// Links every mention. Per-mention failures are reported, not fatal.
pub fn link_corpus(dataset: &[CqaText], index: &AliasIndex, model: &RankerModel) -> (Vec<Option<LinkResult>>, CorpusReport) {
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = dataset
        .iter()
        .enumerate()
        .flat_map(|(t, z)| (0..z.mentions.len()).map(move |m| (t, m)))
        .collect();
    let results: Vec<Result<LinkResult>> = jobs
        .par_iter()
        .map(|&(t, m)| {
            let req = LinkRequest {
                text: &dataset[t],
                mention_index: m,
            };
            link_mention(&req, index, model)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let (mut labeled, mut correct, mut unresolvable) = (0, 0, 0);
    for (r, &(t, m)) in results.into_iter().zip(&jobs) {
        match r {
            Ok(res) => {
                if res.entity.is_none() {
                    unresolvable += 1;
                }
                if let Some(g) = &res.diagnostics.gold {
                    labeled += 1;
                    correct += usize::from(res.entity.as_ref() == Some(g));
                }
                out.push(Some(res));
            }
            Err(e) => {
                failures.push(format!("{} mention {m}: {e}", dataset[t].id));
                out.push(None);
            }
        }
        if (out.len()) % 1000 == 0 {
            log::info!("linked {} / {} mentions", out.len(), jobs.len());
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let report = CorpusReport {
        n_mentions: jobs.len(),
        n_labeled: labeled,
        n_correct: correct,
        n_unresolvable: unresolvable,
        accuracy: if labeled == 0 { 0.0 } else { correct as f64 / labeled as f64 },
        failures,
        seconds,
        mentions_per_second: if seconds > 0.0 { jobs.len() as f64 / seconds } else { 0.0 },
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_line;
    use crate::index::tests::roosevelt_index;
    use crate::ranker::model::tests::tiny_model;
    use crate::ranker::FeatureMask;

    const LINE: &str = r#"{"id":"z1","question":"Was Roosevelt a good president?","answers":[{"text":"FDR led during the war.","user":"alice"},{"text":"Teddy was earlier.","user":"bob"}],"topics":[{"name":"World War II","questions":["Who won WW2?","Was Roosevelt president in the war?"]}],"users":{"alice":{"questions":["Best US president?"]},"bob":{"questions":[]}},"mentions":[{"surface":"Roosevelt","unit":"q","start":4,"end":13,"gold":"FDR"},{"surface":"Teddy","unit":1,"start":0,"end":5,"gold":"Theodore"}]}"#;

    fn text() -> CqaText {
        parse_line(LINE, 1, &mut Vec::new()).unwrap()
    }

    #[test]
    fn aux_kinds_follow_host_unit() {
        let z = text();
        let q = aux_texts(&z, &z.mentions[0]).unwrap();
        assert_eq!(q[0].len(), 2);
        assert_eq!(q[1].len(), 2);
        assert_eq!(q[2], vec!["Best US president?"]);
        let a = aux_texts(&z, &z.mentions[1]).unwrap();
        assert_eq!(a[0], vec!["FDR led during the war."]);
        assert!(a[2].is_empty());
    }

    #[test]
    fn selection_prefers_similar_topic_question() {
        let z = text();
        let input = prepare_mention(&z, 0, 0, &roosevelt_index(), 64, 1, 30, &SelectionConfig::default()).unwrap();
        assert_eq!(input.selected[1][0].text, "Was Roosevelt president in the war?");
        assert_eq!(input.candidates.len(), 2);
        assert_eq!(input.candidates.gold_index, Some(0));
    }

    #[test]
    fn link_is_deterministic_and_reports_calls() {
        let z = text();
        let model = tiny_model(4);
        let req = LinkRequest {
            text: &z,
            mention_index: 0,
        };
        let a = link_mention(&req, &roosevelt_index(), &model).unwrap();
        let b = link_mention(&req, &roosevelt_index(), &model).unwrap();
        assert_eq!(a.entity, b.entity);
        assert_eq!(a.diagnostics.encoder_calls, 2 * 4);
        assert!(a.entity.is_some());
        let mut base = model.clone();
        base.config.mask = FeatureMask::base();
        let c = link_mention(&req, &roosevelt_index(), &base).unwrap();
        assert_eq!(c.diagnostics.encoder_calls, 2);
        assert!(c.diagnostics.candidates[0].s_aux_topic.is_none());
    }

    #[test]
    fn unresolvable_mention() {
        let z = text();
        let model = tiny_model(4);
        let req = LinkRequest {
            text: &z,
            mention_index: 1,
        };
        let r = link_mention(&req, &roosevelt_index(), &model).unwrap();
        assert!(r.entity.is_none());
        assert_eq!(r.diagnostics.encoder_calls, 0);
    }

    #[test]
    fn corpus_run() {
        let model = tiny_model(4);
        let (preds, report) = link_corpus(&[], &roosevelt_index(), &model);
        assert!(preds.is_empty());
        assert_eq!(report.n_mentions, 0);
        let data = vec![text(), text()];
        let (preds, report) = link_corpus(&data, &roosevelt_index(), &model);
        assert_eq!(report.n_mentions, 4);
        assert_eq!(report.n_unresolvable, 2);
        let (again, _) = link_corpus(&data, &roosevelt_index(), &model);
        let ids = |p: &Vec<Option<LinkResult>>| p.iter().map(|r| r.as_ref().unwrap().entity.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&preds), ids(&again));
    }
}
