//! Acceptance run: one PASS/FAIL/SKIP line per criterion.
//!
//! `cargo test --release -p cqael-core --test acceptance`. The synthetic
//! ablation and k sweep dominate the runtime. Set `QUORAEL_PATH` to the
//! released dataset (JSON lines) to enable the statistics check.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cqael_core::corpus::{load_dataset, DatasetStats};
use cqael_core::encoder::{AttentionPattern, EncoderConfig, EncoderParams, Sequence};
use cqael_core::eval::{make_folds, run_cell, N_FOLDS};
use cqael_core::gradcheck::{run_all, STEP, TOLERANCE};
use cqael_core::index::{build_alias_index, Page};
use cqael_core::pipeline::{prepare_corpus, MentionInput};
use cqael_core::ranker::{
    learn_tokenizer, normalize, precompute_features, predict, train_fusion, fusion_accuracy, AdamWConfig, Feature,
    FeatureMask, FusionLayer, RankerModel,
};
use cqael_core::selection::SelectionConfig;
use cqael_core::similarity::{jaro_winkler, levenshtein_ratio, ratcliff_obershelp};
use cqael_core::synth::{self, SynthConfig};

const CONTEXT_BUDGET: usize = 64;
const N_MAX: usize = 30;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: Some(ok),
        detail: detail.into(),
    }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let t = Instant::now();
    let o = f();
    (o, t.elapsed())
}

fn within(o: Outcome, took: Duration, limit: Duration) -> Outcome {
    let ok = o.pass.map(|p| p && took <= limit);
    Outcome {
        pass: ok,
        detail: format!("{} [{:.2}s, limit {}s]", o.detail, took.as_secs_f64(), limit.as_secs()),
    }
}

// 1

fn random_page(rng: &mut ChaCha8Rng, titles: &[&str], surfaces: &[&str]) -> Page {
    let mut text = String::new();
    for _ in 0..rng.gen_range(0..12) {
        let target = titles.choose(rng).unwrap();
        match rng.gen_range(0..4) {
            0 => text.push_str(&format!("[[{target}]] ")),
            1 => text.push_str(&format!("[[{target}#Section|{}]] ", surfaces.choose(rng).unwrap())),
            _ => text.push_str(&format!("[[{target}|{}]] ", surfaces.choose(rng).unwrap())),
        }
        text.push_str("some text {{cite|x}} here. ");
    }
    Page {
        title: titles.choose(rng).unwrap().to_string(),
        text,
    }
}

fn priors() -> Outcome {
    let pages = vec![Page {
        title: "US presidents".into(),
        text: "[[Franklin D. Roosevelt|Roosevelt]] and [[Franklin D. Roosevelt|Roosevelt]] and \
               [[Franklin D. Roosevelt|Roosevelt]] but also [[Theodore Roosevelt|Roosevelt]]."
            .into(),
    }];
    let (index, _) = build_alias_index(&pages, &BTreeMap::new(), None);
    let got: Vec<(String, f64)> = index
        .lookup("Roosevelt")
        .iter()
        .map(|e| (e.entity.clone(), e.prior))
        .collect();
    let toy = got.len() == 2
        && got[0] == ("Franklin D. Roosevelt".to_string(), 0.75)
        && got[1] == ("Theodore Roosevelt".to_string(), 0.25);

    let titles = ["Mercury", "Mercury (planet)", "Freddie Mercury", "Paris", "Paris, Texas", "Jaguar", "Jaguar Cars"];
    let surfaces = ["Mercury", "mercury", "Paris", "the city", "Jaguar", "jaguar", "it"];
    let mut worst = 0.0f64;
    let mut surfaces_checked = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample: Vec<Page> = (0..40).map(|_| random_page(&mut rng, &titles, &surfaces)).collect();
        let (index, _) = build_alias_index(&sample, &BTreeMap::new(), None);
        for (_, entries) in index.surfaces() {
            let sum: f64 = entries.iter().map(|e| e.prior).sum();
            worst = worst.max((sum - 1.0).abs());
            surfaces_checked += 1;
        }
    }
    pass(
        toy && worst <= 1e-9 && surfaces_checked > 0,
        format!("Roosevelt {got:?}; {surfaces_checked} surfaces, max |sum-1| = {worst:.1e}"),
    )
}

// 2

fn levenshtein_oracle(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: [char; 8] = ['a', 'b', 'c', 'd', 'A', ' ', 'é', '-'];
    let n = rng.gen_range(0..12);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn similarities() -> Outcome {
    let jw = jaro_winkler("MARTHA", "MARHTA");
    let lr = levenshtein_ratio("kitten", "sitting");
    let k: Vec<char> = "kitten".chars().collect();
    let s: Vec<char> = "sitting".chars().collect();
    let lr_oracle = 1.0 - levenshtein_oracle(&k, &s) as f64 / 7.0;
    let fixed = (jw - 0.9611).abs() <= 1e-3 && (lr - 4.0 / 7.0).abs() <= 1e-9 && (lr_oracle - 4.0 / 7.0).abs() <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let measures: [(&str, fn(&str, &str) -> f64); 3] = [
        ("jaro_winkler", jaro_winkler),
        ("levenshtein_ratio", levenshtein_ratio),
        ("ratcliff_obershelp", ratcliff_obershelp),
    ];
    for case in 0..10_000 {
        let a = random_string(&mut rng);
        let b = if case % 5 == 0 { a.clone() } else { random_string(&mut rng) };
        for (name, f) in measures {
            let ab = f(&a, &b);
            let ba = f(&b, &a);
            let ok = (0.0..=1.0).contains(&ab) && (ab - ba).abs() <= 1e-12 && (f(&a, &a) - 1.0).abs() <= 1e-12;
            if !ok {
                failures.push(format!("{name}({a:?},{b:?})"));
            }
        }
        let ac: Vec<char> = a.chars().collect();
        let bc: Vec<char> = b.chars().collect();
        if !(ac.is_empty() && bc.is_empty()) {
            let want = 1.0 - levenshtein_oracle(&ac, &bc) as f64 / ac.len().max(bc.len()) as f64;
            if (levenshtein_ratio(&a, &b) - want).abs() > 1e-12 {
                failures.push(format!("levenshtein oracle ({a:?},{b:?})"));
            }
        }
    }
    pass(
        fixed && failures.is_empty(),
        format!(
            "jaro_winkler = {jw:.4}, levenshtein_ratio = {lr:.9}; 10000 random pairs, {} failures {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

// 3

fn gradients() -> Outcome {
    let reports = run_all(3);
    let small = reports.iter().all(|r| r.checked <= 5000);
    let ok = small && reports.iter().all(|r| r.passed(TOLERANCE));
    let summary: Vec<String> = reports
        .iter()
        .map(|r| format!("{} ({} params) {:.1e}", r.name, r.checked, r.max_rel_error))
        .collect();
    pass(ok, format!("step {STEP:e}: {}", summary.join(", ")))
}

// 4

fn attention_mask() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut leaks = 0usize;
    let mut worst_row = 0.0f64;
    let mut checked = 0usize;
    for trial in 0..12 {
        let config = EncoderConfig {
            vocab_size: 40,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            max_positions: 320,
            dropout: 0.0,
        };
        let params = EncoderParams::init(config, &mut rng);
        let n = rng.gen_range(70..=300);
        let split = rng.gen_range(1..n);
        let global = if trial % 3 == 0 { vec![0, split] } else { vec![0] };
        let pattern = AttentionPattern::windowed(64, global);
        let seq = Sequence {
            ids: (0..n).map(|_| rng.gen_range(0..config.vocab_size)).collect(),
            segments: (0..n).map(|i| usize::from(i >= split)).collect(),
            pattern: pattern.clone(),
        };
        let (_, cache) = params.forward(&seq, None::<&mut ChaCha8Rng>);
        for layer in cache.attention() {
            for probs in layer {
                for i in 0..n {
                    let row = probs.row(i);
                    worst_row = worst_row.max((row.sum() - 1.0).abs());
                    for j in 0..n {
                        if !pattern.allows(i, j) && row[j] != 0.0 {
                            leaks += 1;
                        }
                    }
                    checked += 1;
                }
            }
        }
    }
    pass(
        leaks == 0 && worst_row <= 1e-6,
        format!("{checked} rows, {leaks} nonzero entries outside the window, max |row sum - 1| = {worst_row:.1e}"),
    )
}

// 5

fn invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad_shift = 0;
    let mut bad_perm = 0;
    let mut worst_sum = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..12);
        // eighths keep shifted scores exact, and give frequent ties
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-16i32..16) as f64 / 8.0).collect();
        let shift = rng.gen_range(-64i32..64) as f64 / 8.0;
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let p = predict(&scores).unwrap();
        if predict(&shifted) != Some(p) {
            bad_shift += 1;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let permuted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        let q = order[predict(&permuted).unwrap()];
        // a permutation may pick another member of a tied maximum
        if scores[q] != scores[p] {
            bad_perm += 1;
        }
        let wide: Vec<f64> = scores.iter().map(|s| s * rng.gen_range(1.0..200.0)).collect();
        for v in [&scores, &shifted, &wide] {
            let probs = normalize(v).unwrap();
            worst_sum = worst_sum.max((probs.iter().sum::<f64>() - 1.0).abs());
        }
    }
    pass(
        bad_shift == 0 && bad_perm == 0 && worst_sum <= 1e-9,
        format!("10000 cases: {bad_shift} shift and {bad_perm} permutation mismatches, max |sum-1| = {worst_sum:.1e}"),
    )
}

// 6

fn trainability() -> Outcome {
    let seed = 6;
    let data = synth::generate(&SynthConfig {
        seed,
        n_texts: 200,
        separable: true,
        ..SynthConfig::default()
    });
    let config = synth::train_config(seed).model;
    let inputs = match prepare_corpus(&data.texts, &data.index, CONTEXT_BUDGET, config.k, N_MAX, &config.selection) {
        Ok(i) => i,
        Err(e) => return pass(false, format!("prepare: {e}")),
    };
    let all: Vec<usize> = (0..data.texts.len()).collect();
    let tok = learn_tokenizer(&data.texts, &inputs, &all, config.vocab_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = match RankerModel::init(config, tok, &mut rng) {
        Ok(m) => m,
        Err(e) => return pass(false, format!("init: {e}")),
    };
    let encoded: Vec<_> = inputs.iter().enumerate().map(|(i, m)| model.encode(i, m)).collect();
    let frozen = precompute_features(&model, &encoded);
    let mut layer = FusionLayer::init(&mut rng);
    let optimizer = AdamWConfig {
        lr: 0.1,
        ..AdamWConfig::default()
    };
    let losses = match train_fusion(&mut layer, &frozen, 200, optimizer) {
        Ok(l) => l,
        Err(e) => return pass(false, format!("train: {e}")),
    };
    let decreasing = losses.windows(2).take(10).all(|w| w[1] < w[0]);
    let acc = fusion_accuracy(&layer, &frozen);
    pass(
        decreasing && acc == 1.0,
        format!(
            "{} mentions; loss {:.3} -> {:.3} after 10 steps -> {:.4} after 200, strictly decreasing: {decreasing}; train accuracy {acc:.4}",
            frozen.iter().filter(|m| m.gold.is_some()).count(),
            losses[0],
            losses[10],
            losses[200]
        ),
    )
}

// 7 and 8

struct SeedRun {
    texts: Vec<cqael_core::corpus::CqaText>,
    inputs: Vec<MentionInput>,
    folds: Vec<cqael_core::eval::Fold>,
    seed: u64,
}

impl SeedRun {
    fn new(seed: u64) -> Self {
        let data = synth::generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        });
        let inputs = prepare_corpus(&data.texts, &data.index, CONTEXT_BUDGET, 5, N_MAX, &SelectionConfig::default())
            .expect("synthetic corpus prepares");
        let folds = make_folds(data.texts.len(), seed).expect("enough texts");
        Self {
            texts: data.texts,
            inputs,
            folds,
            seed,
        }
    }

    /// Test accuracy and labeled test mentions of fold 0.
    fn accuracy(&self, mask: FeatureMask, k: usize) -> (f64, usize) {
        let mut cfg = synth::train_config(self.seed);
        cfg.model.mask = mask;
        cfg.model.k = k;
        match run_cell(&self.texts, &self.inputs, &self.folds, 0, &cfg) {
            Ok(c) => (c.accuracy, c.tally.n_mentions),
            Err(e) => {
                println!("  seed {} {mask} k={k}: {e}", self.seed);
                (0.0, 0)
            }
        }
    }

    fn most_selected(&self) -> usize {
        self.inputs
            .iter()
            .flat_map(|i| i.selected.iter().map(Vec::len))
            .max()
            .unwrap_or(0)
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn synthetic() -> (Outcome, Outcome) {
    let masks = FeatureMask::ablation_set();
    let mut table = vec![Vec::new(); masks.len()];
    let mut sweep: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut mentions = 0;
    let mut ablation_time = Duration::ZERO;
    let mut reused_k5 = true;
    for seed in SEEDS {
        let t = Instant::now();
        let run = SeedRun::new(seed);
        for (row, &mask) in table.iter_mut().zip(&masks) {
            let (acc, n) = run.accuracy(mask, 3);
            row.push(acc);
            if mask == FeatureMask::full() {
                mentions += n;
                sweep.entry(3).or_default().push(acc);
            }
        }
        ablation_time += t.elapsed();
        let full = FeatureMask::full();
        sweep.entry(0).or_default().push(run.accuracy(full, 0).0);
        let k4 = run.accuracy(full, 4).0;
        sweep.entry(4).or_default().push(k4);
        // with at most four texts of any kind, k=5 sees the k=4 inputs
        let k5 = if run.most_selected() <= 4 {
            k4
        } else {
            reused_k5 = false;
            run.accuracy(full, 5).0
        };
        sweep.entry(5).or_default().push(k5);
        println!(
            "  seed {seed}: {} | k0 {:.3} k4 {k4:.3} k5 {k5:.3} [{:.0}s]",
            masks
                .iter()
                .zip(&table)
                .map(|(m, r)| format!("{m} {:.3}", r.last().unwrap()))
                .collect::<Vec<_>>()
                .join(", "),
            sweep[&0].last().unwrap(),
            t.elapsed().as_secs_f64()
        );
    }

    let base = median(&table[0]);
    let full = median(table.last().unwrap());
    let singles: Vec<(String, f64)> = masks[1..masks.len() - 1]
        .iter()
        .zip(&table[1..table.len() - 1])
        .map(|(m, r)| {
            let f = Feature::AUX.iter().find(|&&f| m.has(f)).unwrap();
            (f.name().to_string(), median(r))
        })
        .collect();
    let ok7 = mentions >= 1000 && full - base >= 0.10 && singles.iter().all(|(_, a)| *a > base);
    let o7 = pass(
        ok7,
        format!(
            "{mentions} test mentions over {} seeds; median base {base:.3}, full {full:.3} (+{:.3}), {}; base [{}], full [{}]",
            SEEDS.len(),
            full - base,
            singles
                .iter()
                .map(|(n, a)| format!("+{n} {a:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            fmt(&table[0]),
            fmt(table.last().unwrap())
        ),
    );
    let o7 = within(o7, ablation_time, Duration::from_secs(15 * 60));

    let means: BTreeMap<usize, f64> = sweep.iter().map(|(&k, v)| (k, mean(v))).collect();
    let plateau: Vec<f64> = [3, 4, 5].iter().map(|k| means[k]).collect();
    let spread = plateau.iter().cloned().fold(f64::MIN, f64::max) - plateau.iter().cloned().fold(f64::MAX, f64::min);
    let o8 = pass(
        means[&3] >= means[&0] && spread <= 0.02,
        format!(
            "mean accuracy {}; k3 - k0 = {:+.3}, spread over k=3..5 = {spread:.3}{}",
            means
                .iter()
                .map(|(k, a)| format!("k{k} {a:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            means[&3] - means[&0],
            if reused_k5 { " (k=5 inputs equal k=4)" } else { "" }
        ),
    );
    (o7, o8)
}

// 9

fn folds() -> Outcome {
    let mut problems = Vec::new();
    for n in [5, 10, 37, 99, 100, 504, 1001, 2000] {
        for seed in [0, 1, 42] {
            let folds = make_folds(n, seed).unwrap();
            if folds != make_folds(n, seed).unwrap() {
                problems.push(format!("n={n} seed={seed}: not deterministic"));
            }
            if folds.len() != N_FOLDS {
                problems.push(format!("n={n}: {} folds", folds.len()));
            }
            let mut tests: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
            tests.sort_unstable();
            if tests != (0..n).collect::<Vec<_>>() {
                problems.push(format!("n={n} seed={seed}: test sets do not partition"));
            }
            for (i, f) in folds.iter().enumerate() {
                let mut all: Vec<usize> = f.train.iter().chain(&f.validation).chain(&f.test).copied().collect();
                all.sort_unstable();
                if all != (0..n).collect::<Vec<_>>() {
                    problems.push(format!("n={n} fold {i}: splits overlap or miss texts"));
                }
                for (len, share) in [(f.train.len(), 0.7), (f.validation.len(), 0.1), (f.test.len(), 0.2)] {
                    if (len as f64 - share * n as f64).abs() > 1.0 {
                        problems.push(format!("n={n} fold {i}: {len} vs {share} of {n}"));
                    }
                }
            }
        }
        if n >= 37 && make_folds(n, 0).unwrap() == make_folds(n, 1).unwrap() {
            problems.push(format!("n={n}: seeds 0 and 1 agree"));
        }
    }
    pass(
        problems.is_empty(),
        format!("8 sizes x 3 seeds; {} problems {:?}", problems.len(), problems.iter().take(3).collect::<Vec<_>>()),
    )
}

// 10

fn dataset_stats() -> Outcome {
    let Some(path) = std::env::var_os("QUORAEL_PATH") else {
        return Outcome {
            pass: None,
            detail: "QUORAEL_PATH not set".into(),
        };
    };
    let report = match load_dataset(&path) {
        Ok(r) => r,
        Err(e) => return pass(false, format!("{e}")),
    };
    let s = DatasetStats::of(&report.texts);
    let got = (s.cqa_texts, s.answers, s.labeled_mentions, s.topic_tags);
    pass(
        got == (504, 2192, 8030, 1165) && report.rejected.is_empty(),
        format!("{s}; {} rejected lines", report.rejected.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let (o, t) = timed(priors);
    results.push((1, "prior normalization", within(o, t, Duration::from_secs(1))));
    let (o, t) = timed(similarities);
    results.push((2, "string similarity", within(o, t, Duration::from_secs(10))));
    let (o, t) = timed(gradients);
    results.push((3, "gradient checks", within(o, t, Duration::from_secs(60))));
    results.push((4, "attention mask", attention_mask()));
    results.push((5, "softmax and argmax invariance", invariance()));
    results.push((6, "fusion trainability", trainability()));
    println!("running the synthetic ablation and k sweep ({} seeds)", SEEDS.len());
    let (o7, o8) = synthetic();
    results.push((7, "auxiliary ablation", o7));
    results.push((8, "k plateau", o8));
    results.push((9, "fold protocol", folds()));
    results.push((10, "dataset statistics", dataset_stats()));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = match o.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("{tag} {n:>2} {name}: {}", o.detail);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
