//! Synthetic aux-signal corpus.
//!
//! Each CQA text holds one mention of an ambiguous surface with three
//! candidate entities, one per category. A description is the surface and
//! its category word; the mention context never holds a category word.
//! Exactly one auxiliary text, in a kind drawn at random, repeats the gold
//! entity's category word next to a phrase shared with the mention context,
//! so that it ranks among the top three by string similarity. The other
//! texts are phrase-sharing decoys and noise without category words.
//! Outside the separable variant some distractor always has a higher prior
//! than the gold; in the separable variant the gold has the largest prior
//! by a wide margin.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Answer, CqaText, Mention, TopicTag, Unit, User};
use crate::index::{AliasIndex, AnchorCounts};
use crate::ranker::TrainConfig;
use crate::selection::{select_useful_texts, SelectionConfig};

pub const CATEGORIES: [&str; 3] = ["astronomy", "basketball", "cooking"];

/// Occurrences of the category word in the signal text.
const KEYWORD_REPEATS: usize = 2;

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_texts: usize,
    pub n_surfaces: usize,
    pub n_fillers: usize,
    /// Gold always has the largest prior, by more than 60 anchor counts.
    pub separable: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_texts: 2000,
            n_surfaces: 60,
            n_fillers: 40,
            separable: false,
        }
    }
}

pub struct SynthData {
    pub texts: Vec<CqaText>,
    pub index: AliasIndex,
    /// Auxiliary kind (0 parallel, 1 topic, 2 user) holding the signal,
    /// per text.
    pub signal_kind: Vec<usize>,
}

/// A small model and optimizer setting that learns this corpus within ten
/// epochs on one core.
pub fn train_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        seed,
        epochs: 10,
        ..TrainConfig::default()
    };
    cfg.optimizer.lr = 3e-3;
    cfg.model.d_model = 16;
    cfg.model.n_heads = 8;
    cfg.model.n_layers = 1;
    cfg.model.d_ff = 64;
    cfg.model.dropout = 0.0;
    cfg
}

/// Distinct pseudo-words of `syllables` syllables.
fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, syllables: usize, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Entity {
    id: String,
    category: usize,
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    fillers: &'a [String],
}

impl Gen<'_> {
    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fillers.choose(&mut self.rng).unwrap().clone()).collect()
    }

    fn sentence(&mut self, parts: Vec<String>) -> String {
        let mut s = parts.join(" ");
        if let Some(first) = s.get(0..1) {
            s = first.to_uppercase() + &s[1..];
        }
        s
    }

    fn noise(&mut self) -> String {
        let n = self.rng.gen_range(2..4);
        let w = self.words(n);
        self.sentence(w)
    }

    /// Filler words around `core` words kept in order.
    fn around(&mut self, core: &[String]) -> String {
        let pre = self.rng.gen_range(0..2);
        let post = self.rng.gen_range(0..2);
        let mut parts = self.words(pre);
        parts.extend(core.iter().cloned());
        parts.extend(self.words(post));
        self.sentence(parts)
    }
}

pub fn generate(config: &SynthConfig) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken: std::collections::HashSet<String> = CATEGORIES.iter().map(|c| c.to_string()).collect();
    let fillers = pseudo_words(&mut rng, config.n_fillers, 2, &mut taken);
    let surfaces: Vec<String> = pseudo_words(&mut rng, config.n_surfaces, 3, &mut taken)
        .into_iter()
        .map(|w| w[..1].to_uppercase() + &w[1..])
        .collect();

    let mut gen = Gen {
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
        fillers: &fillers,
    };

    // three entities per surface, distinct categories and counts
    let mut counts = AnchorCounts::new();
    let mut descriptions = BTreeMap::new();
    let mut by_surface: Vec<Vec<(Entity, u64)>> = Vec::new();
    for s in &surfaces {
        let mut cats: Vec<usize> = (0..CATEGORIES.len()).collect();
        cats.shuffle(&mut rng);
        let mut cs: Vec<u64> = (1..=30).collect();
        cs.shuffle(&mut rng);
        if config.separable {
            // a wide margin keeps the set separable by the prior alone
            // under noisy encoder features
            let top = (0..3).max_by_key(|&j| cs[j]).unwrap();
            cs[top] += 60;
        }
        let mut ents = Vec::new();
        for (j, &cat) in cats.iter().take(3).enumerate() {
            let id = format!("{s} ({})", CATEGORIES[cat]);
            descriptions.insert(id.clone(), format!("{s} {}.", CATEGORIES[cat]));
            counts.add(s, &id, cs[j]);
            ents.push((Entity { id, category: cat }, cs[j]));
        }
        by_surface.push(ents);
    }
    let (index, _) = AliasIndex::from_counts(counts, &descriptions);

    let selection = SelectionConfig::default();
    let mut texts = Vec::with_capacity(config.n_texts);
    let mut signal_kinds = Vec::with_capacity(config.n_texts);
    for t in 0..config.n_texts {
        let si = gen.rng.gen_range(0..surfaces.len());
        let surface = &surfaces[si];
        let ents = &by_surface[si];
        let top = (0..ents.len()).max_by_key(|&j| ents[j].1).unwrap();
        let gold = if config.separable {
            &ents[top].0
        } else {
            // a distractor always has a higher prior
            let others: Vec<usize> = (0..ents.len()).filter(|&j| j != top).collect();
            &ents[*others.choose(&mut gen.rng).unwrap()].0
        };
        let phrase = gen.words(3);
        let in_question = gen.rng.gen_bool(0.5);
        let signal_kind = gen.rng.gen_range(0..3);

        let mut host_core = vec![surface.clone()];
        host_core.extend(phrase.iter().cloned());
        let host = gen.around(&host_core);
        let host_text = if in_question { format!("{host}?") } else { format!("{host}.") };
        let start = host_text.find(surface.as_str()).unwrap();
        let start = host_text[..start].chars().count();
        let context = host_text.clone();

        let n_parallel = if in_question { 3 } else { 2 };
        let lens = [n_parallel, 4, 4];
        let mut kinds: [Vec<String>; 3] = Default::default();
        for (kind, list) in kinds.iter_mut().enumerate() {
            let n_decoys = (lens[kind] - 1).min(2);
            for _ in 0..n_decoys {
                list.push(gen.around(&phrase));
            }
            while list.len() < lens[kind] - usize::from(kind == signal_kind) {
                list.push(gen.noise());
            }
            if kind == signal_kind {
                let mut core = phrase.clone();
                for _ in 0..KEYWORD_REPEATS {
                    let pos = gen.rng.gen_range(0..=core.len());
                    core.insert(pos, CATEGORIES[gold.category].to_string());
                }
                // keep drawing until the signal is in the top 3
                for attempt in 0.. {
                    if attempt % 20 == 19 {
                        // the noise texts outrank it; draw fresh ones
                        for text in list.iter_mut().skip(n_decoys) {
                            *text = gen.noise();
                        }
                    }
                    let candidate = gen.around(&core);
                    let mut trial = list.clone();
                    trial.push(candidate.clone());
                    let top = select_useful_texts(&context, &trial, 3, &selection);
                    if top.iter().any(|s| s.text == candidate) {
                        list.push(candidate);
                        break;
                    }
                }
            }
            list.shuffle(&mut gen.rng);
        }

        let [parallel, topic, user] = kinds;
        let users: Vec<String> = (0..3).map(|j| format!("user{t}_{j}")).collect();
        let mut answers: Vec<Answer> = Vec::new();
        if !in_question {
            answers.push(Answer {
                text: host_text.clone(),
                user: users[0].clone(),
            });
        }
        for p in parallel {
            let u = users[answers.len()].clone();
            answers.push(Answer { text: p, user: u });
        }
        let mut user_map = BTreeMap::new();
        if in_question {
            // the union over answering users is the user kind
            for (j, u) in users.iter().enumerate() {
                let qs = user.iter().skip(j).step_by(3).cloned().collect();
                user_map.insert(
                    u.clone(),
                    User {
                        name: u.clone(),
                        questions: qs,
                    },
                );
            }
        } else {
            user_map.insert(
                users[0].clone(),
                User {
                    name: users[0].clone(),
                    questions: user,
                },
            );
            for u in &users[1..] {
                let qs = (0..2).map(|_| gen.noise() + "?").collect();
                user_map.insert(
                    u.clone(),
                    User {
                        name: u.clone(),
                        questions: qs,
                    },
                );
            }
        }
        let split = gen.rng.gen_range(1..topic.len());
        let topic_tags = vec![
            TopicTag {
                name: format!("topic {}", gen.words(1)[0]),
                questions: topic[..split].to_vec(),
            },
            TopicTag {
                name: format!("topic {}", gen.words(1)[0]),
                questions: topic[split..].to_vec(),
            },
        ];
        let question = if in_question {
            host_text.clone()
        } else {
            let q = gen.noise();
            format!("{q}?")
        };
        let mention = Mention {
            surface: surface.clone(),
            unit: if in_question { Unit::Question } else { Unit::Answer(0) },
            start,
            end: start + surface.chars().count(),
            gold: Some(gold.id.clone()),
        };
        texts.push(CqaText {
            id: format!("synth-{t}"),
            question,
            answers,
            topic_tags,
            users: user_map,
            mentions: vec![mention],
        });
        signal_kinds.push(signal_kind);
    }
    SynthData {
        texts,
        index,
        signal_kind: signal_kinds,
    }
}
