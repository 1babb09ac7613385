use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use cqael_core::candidates::{candidate_recall, generate_candidates};
use cqael_core::corpus::{load_dataset, write_dataset, CqaText, DatasetStats};
use cqael_core::encoder::mention_window;
use cqael_core::eval::{evaluate_config, make_folds, run_ablation, sweep_k, train_fold, EvalReport, N_FOLDS};
use cqael_core::index::{build_alias_index, read_count_tsv, read_description_tsv, read_pages, AliasIndex};
use cqael_core::pipeline::{aux_texts, link_corpus, prepare_corpus, AUX_KINDS};
use cqael_core::ranker::{FeatureMask, TrainConfig};
use cqael_core::selection::{select_useful_texts, SelectionConfig};
use cqael_core::{checkpoint, gradcheck, synth, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "cqael", version, about = "Entity linking for CQA texts with auxiliary data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize)]
struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Allow overwriting existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// TOML file with default option values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the alias index from a page dump or a count table.
    BuildIndex(BuildIndexArgs),
    /// Report dataset counts and rejected lines.
    Stats(StatsArgs),
    /// Write the candidate set of every mention.
    Candidates(CandidatesArgs),
    /// Write the useful texts selected for every mention.
    Select(SelectArgs),
    /// Train on one fold and save a checkpoint.
    Train(TrainArgs),
    /// Link every mention of a dataset with a saved model.
    Link(LinkArgs),
    /// Cross-validate one configuration.
    Eval(EvalArgs),
    /// Cross-validate a list of feature masks.
    Ablate(AblateArgs),
    /// Cross-validate a list of k values.
    SweepK(SweepArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck,
    /// Generate the synthetic auxiliary-signal dataset.
    Synth(SynthArgs),
}

#[derive(Args, Serialize)]
struct BuildIndexArgs {
    /// JSON-lines pages, one `{"title", "text"}` object per line.
    #[arg(long, conflicts_with = "counts", required_unless_present = "counts")]
    pages: Option<PathBuf>,
    /// Precomputed `surface<TAB>entity<TAB>count` rows.
    #[arg(long)]
    counts: Option<PathBuf>,
    /// `entity<TAB>description` rows.
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also export the index as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fail if any line is rejected.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Serialize)]
struct CandidatesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Context window in tokens.
    #[arg(long, default_value_t = 64)]
    context_tokens: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Model and optimizer options shared by the training commands.
#[derive(Args, Serialize, Default)]
struct ModelArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_texts: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Fraction of steps spent warming up.
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    vocab_max: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    /// `base`, `full`, or a comma list of ctxt, prior, parallel, topic, user.
    #[arg(long)]
    mask: Option<String>,
}

#[derive(Args, Serialize)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    index: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct LinkArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Predictions with diagnostics, JSON lines.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma list of fold numbers; default all.
    #[arg(long)]
    folds: Option<String>,
    /// JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Semicolon-separated masks; default base, base plus each auxiliary
    /// kind, and full.
    #[arg(long)]
    masks: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    /// TSV table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "0,1,2,3,4,5")]
    ks: String,
    #[arg(long)]
    folds: Option<String>,
    /// TSV table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// Dataset, JSON lines.
    #[arg(long)]
    out: PathBuf,
    /// Alias index of the synthetic entities.
    #[arg(long)]
    index_out: Option<PathBuf>,
    #[arg(long)]
    texts: Option<usize>,
    /// Gold always has the largest prior.
    #[arg(long)]
    separable: bool,
}

/// Values a config file may set. Flags override them.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_texts: Option<usize>,
    weight_decay: Option<f64>,
    warmup: Option<f64>,
    d_model: Option<usize>,
    heads: Option<usize>,
    layers: Option<usize>,
    d_ff: Option<usize>,
    dropout: Option<f64>,
    vocab_max: Option<usize>,
    k: Option<usize>,
    n_max: Option<usize>,
    mask: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    /// A check ran and did not pass.
    Check(String),
    Diverged(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

struct Ctx {
    seed: u64,
    force: bool,
    file: FileConfig,
}

impl Ctx {
    /// Refuses to clobber an existing file unless `--force` was given.
    fn claim(&self, path: &Path) -> CliResult<()> {
        if path.exists() && !self.force {
            return Err(usage(format!(
                "{} exists; pass --force to overwrite",
                path.display()
            )));
        }
        Ok(())
    }

    fn train_config(&self, a: &ModelArgs) -> CliResult<TrainConfig> {
        let f = &self.file;
        let mut c = TrainConfig {
            seed: self.seed,
            ..TrainConfig::default()
        };
        macro_rules! set {
            ($field:expr, $name:ident) => {
                if let Some(v) = a.$name.clone().or(f.$name.clone()) {
                    $field = v;
                }
            };
        }
        set!(c.epochs, epochs);
        set!(c.batch_texts, batch_texts);
        set!(c.optimizer.lr, lr);
        set!(c.optimizer.weight_decay, weight_decay);
        set!(c.optimizer.warmup, warmup);
        set!(c.model.d_model, d_model);
        set!(c.model.n_heads, heads);
        set!(c.model.n_layers, layers);
        set!(c.model.d_ff, d_ff);
        set!(c.model.dropout, dropout);
        set!(c.model.vocab_max, vocab_max);
        set!(c.model.k, k);
        set!(c.model.n_max, n_max);
        if let Some(m) = a.mask.as_ref().or(f.mask.as_ref()) {
            c.model.mask = m.parse().map_err(|e: Error| usage(e.to_string()))?;
        }
        if c.epochs == 0 || c.batch_texts == 0 {
            return Err(usage("--epochs and --batch-texts must be positive"));
        }
        if !(c.optimizer.lr > 0.0) || !(0.0..1.0).contains(&c.optimizer.warmup) {
            return Err(usage("--lr must be positive and --warmup in [0, 1)"));
        }
        if c.model.n_max == 0 {
            return Err(usage("--n-max must be at least 1"));
        }
        c.model.validate().map_err(|e| usage(e.to_string()))?;
        Ok(c)
    }
}

fn print_config(command: &str, global: &Global, seed: u64, threads: usize, body: serde_json::Value) {
    let line = json!({
        "command": command,
        "seed": seed,
        "threads": threads,
        "force": global.force,
        "config": global.config,
        "options": body,
    });
    eprintln!("effective config: {line}");
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| usage(format!("bad {what} {p:?}"))))
        .collect()
}

fn fold_ids(spec: &Option<String>) -> CliResult<Vec<usize>> {
    let ids = match spec {
        None => (0..N_FOLDS).collect(),
        Some(s) => parse_list(s, "fold")?,
    };
    if ids.is_empty() || ids.iter().any(|&f| f >= N_FOLDS) {
        return Err(usage(format!("folds must be in 0..{N_FOLDS}")));
    }
    Ok(ids)
}

fn load_strict(path: &Path) -> CliResult<Vec<CqaText>> {
    let report = load_dataset(path)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report.into_strict()?)
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    fs::write(path, content).map_err(|e| io_err(path, e))
}

fn write_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(&row).expect("rows serialize");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn run(cli: Cli) -> CliResult<()> {
    let file: FileConfig = match &cli.global.config {
        None => FileConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
    };
    let seed = cli.global.seed.or(file.seed).unwrap_or(0);
    let threads = cli
        .global
        .threads
        .or(file.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| usage(format!("thread pool: {e}")))?;
    let ctx = Ctx {
        seed,
        force: cli.global.force,
        file,
    };
    let g = &cli.global;

    match &cli.command {
        Command::BuildIndex(a) => {
            print_config("build-index", g, seed, threads, json!(a));
            ctx.claim(&a.out)?;
            if let Some(t) = &a.tsv {
                ctx.claim(t)?;
            }
            let descriptions = match &a.descriptions {
                Some(p) => read_description_tsv(p)?,
                None => BTreeMap::new(),
            };
            let (index, report) = match (&a.pages, &a.counts) {
                (Some(p), _) => {
                    let pages = read_pages(p)?;
                    build_alias_index(&pages, &descriptions, None)
                }
                (None, Some(c)) => AliasIndex::from_counts(read_count_tsv(c)?, &descriptions),
                (None, None) => return Err(usage("one of --pages or --counts is required")),
            };
            index.save(&a.out)?;
            if let Some(t) = &a.tsv {
                let file = fs::File::create(t).map_err(|e| io_err(t, e))?;
                let mut w = std::io::BufWriter::new(file);
                index.export_tsv(&mut w).map_err(|e| io_err(t, e))?;
                w.flush().map_err(|e| io_err(t, e))?;
            }
            println!(
                "{} surfaces, {} entities, {} without description",
                index.n_surfaces(),
                index.n_entities(),
                report.missing_descriptions.len()
            );
        }
        Command::Stats(a) => {
            print_config("stats", g, seed, threads, json!(a));
            let report = load_dataset(&a.data)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for e in &report.rejected {
                eprintln!("rejected: {e}");
            }
            println!("{}", DatasetStats::of(&report.texts));
            println!("{} lines rejected", report.rejected.len());
            if a.strict {
                report.into_strict()?;
            }
        }
        Command::Candidates(a) => {
            let n_max = a.n_max.unwrap_or(cqael_core::candidates::DEFAULT_N_MAX);
            print_config("candidates", g, seed, threads, json!({ "args": a, "n_max": n_max }));
            if n_max == 0 {
                return Err(usage("--n-max must be at least 1"));
            }
            ctx.claim(&a.out)?;
            let data = load_strict(&a.data)?;
            let index = AliasIndex::load(&a.index)?;
            let rows = data.iter().flat_map(|z| {
                z.mentions.iter().enumerate().map(|(i, m)| {
                    json!({
                        "text_id": z.id,
                        "mention": i,
                        "candidates": generate_candidates(m, &index, n_max),
                    })
                })
            });
            write_lines(&a.out, rows)?;
            match candidate_recall(&data, &index, Some(n_max)) {
                Ok(r) => println!("candidate recall {r:.4}"),
                Err(e) => println!("candidate recall undefined: {e}"),
            }
        }
        Command::Select(a) => {
            let k = a.k.or(ctx.file.k).unwrap_or(3);
            print_config("select", g, seed, threads, json!({ "args": a, "k": k }));
            ctx.claim(&a.out)?;
            let data = load_strict(&a.data)?;
            let cfg = SelectionConfig::default();
            let mut rows = Vec::new();
            for z in &data {
                for (i, m) in z.mentions.iter().enumerate() {
                    let context = mention_window(z, m, a.context_tokens).plain();
                    let texts = aux_texts(z, m)?;
                    let selected: BTreeMap<&str, _> = AUX_KINDS
                        .iter()
                        .zip(&texts)
                        .map(|(kind, t)| (*kind, select_useful_texts(&context, t, k, &cfg)))
                        .collect();
                    rows.push(json!({ "text_id": z.id, "mention": i, "context": context, "selected": selected }));
                }
            }
            write_lines(&a.out, rows)?;
        }
        Command::Train(a) => {
            let cfg = ctx.train_config(&a.model)?;
            print_config("train", g, seed, threads, json!({ "data": a.data, "fold": a.fold, "out": a.out, "train": cfg }));
            if a.fold >= N_FOLDS {
                return Err(usage(format!("--fold must be in 0..{N_FOLDS}")));
            }
            ctx.claim(&a.out)?;
            let data = load_strict(&a.data.data)?;
            let index = AliasIndex::load(&a.data.index)?;
            let inputs = prepare_inputs(&data, &index, &cfg, cfg.model.k)?;
            let folds = make_folds(data.len(), seed)?;
            let (outcome, cell) = train_fold(&data, &inputs, &folds, a.fold, &cfg)?;
            checkpoint::save(&outcome.model, &a.out)?;
            for e in &outcome.history {
                println!(
                    "epoch {} loss {:.4} validation {}",
                    e.epoch,
                    e.mean_loss,
                    e.val_accuracy.map_or("-".into(), |v| format!("{v:.4}"))
                );
            }
            println!(
                "best epoch {}, test accuracy {:.4} ({}/{}), recall ceiling {:.4}",
                cell.best_epoch, cell.accuracy, cell.tally.n_correct, cell.tally.n_mentions, cell.recall_ceiling
            );
        }
        Command::Link(a) => {
            print_config("link", g, seed, threads, json!(a));
            ctx.claim(&a.out)?;
            let data = load_strict(&a.data.data)?;
            let index = AliasIndex::load(&a.data.index)?;
            let model = checkpoint::load(&a.model)?;
            let (results, report) = link_corpus(&data, &index, &model);
            write_lines(&a.out, results)?;
            for f in &report.failures {
                eprintln!("failed: {f}");
            }
            println!(
                "{} mentions, {} labeled, accuracy {:.4}, {} unresolvable, {:.1} mentions/s",
                report.n_mentions, report.n_labeled, report.accuracy, report.n_unresolvable, report.mentions_per_second
            );
        }
        Command::Eval(a) => {
            let cfg = ctx.train_config(&a.model)?;
            let folds_ids = fold_ids(&a.folds)?;
            print_config("eval", g, seed, threads, json!({ "data": a.data, "folds": folds_ids, "out": a.out, "train": cfg }));
            if let Some(o) = &a.out {
                ctx.claim(o)?;
            }
            let data = load_strict(&a.data.data)?;
            let index = AliasIndex::load(&a.data.index)?;
            let inputs = prepare_inputs(&data, &index, &cfg, cfg.model.k)?;
            let folds = make_folds(data.len(), seed)?;
            let report = evaluate_config(&data, &inputs, &folds, &folds_ids, &cfg);
            print!("{report}");
            if let Some(o) = &a.out {
                write_file(o, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
            }
            fail_on_divergence([&report])?;
        }
        Command::Ablate(a) => {
            let cfg = ctx.train_config(&a.model)?;
            let folds_ids = fold_ids(&a.folds)?;
            let masks: Vec<FeatureMask> = match &a.masks {
                None => FeatureMask::ablation_set(),
                Some(s) => s
                    .split(';')
                    .map(|m| m.parse().map_err(|e: Error| usage(e.to_string())))
                    .collect::<CliResult<_>>()?,
            };
            let names: Vec<String> = masks.iter().map(|m| m.to_string()).collect();
            print_config(
                "ablate",
                g,
                seed,
                threads,
                json!({ "data": a.data, "masks": names, "folds": folds_ids, "out": a.out, "train": cfg }),
            );
            if let Some(o) = &a.out {
                ctx.claim(o)?;
            }
            let data = load_strict(&a.data.data)?;
            let index = AliasIndex::load(&a.data.index)?;
            let inputs = prepare_inputs(&data, &index, &cfg, cfg.model.k)?;
            let folds = make_folds(data.len(), seed)?;
            let table = run_ablation(&data, &inputs, &folds, &folds_ids, &cfg, &masks)?;
            print!("{table}");
            if let Some(o) = &a.out {
                write_file(o, &table.to_tsv())?;
            }
            fail_on_divergence(table.rows.iter().map(|r| &r.report))?;
        }
        Command::SweepK(a) => {
            let cfg = ctx.train_config(&a.model)?;
            let folds_ids = fold_ids(&a.folds)?;
            let ks: Vec<usize> = parse_list(&a.ks, "k")?;
            if ks.is_empty() {
                return Err(usage("--ks needs at least one value"));
            }
            print_config(
                "sweep-k",
                g,
                seed,
                threads,
                json!({ "data": a.data, "ks": ks, "folds": folds_ids, "out": a.out, "train": cfg }),
            );
            if let Some(o) = &a.out {
                ctx.claim(o)?;
            }
            let data = load_strict(&a.data.data)?;
            let index = AliasIndex::load(&a.data.index)?;
            let k_max = ks.iter().copied().max().unwrap_or(0);
            let inputs = prepare_inputs(&data, &index, &cfg, k_max)?;
            let folds = make_folds(data.len(), seed)?;
            let sweep = sweep_k(&data, &inputs, &folds, &folds_ids, &cfg, &ks)?;
            print!("{}", sweep.to_tsv());
            if let Some(o) = &a.out {
                write_file(o, &sweep.to_tsv())?;
            }
            fail_on_divergence(&sweep.rows)?;
        }
        Command::Gradcheck => {
            print_config(
                "gradcheck",
                g,
                seed,
                threads,
                json!({ "step": gradcheck::STEP, "tolerance": gradcheck::TOLERANCE }),
            );
            let reports = gradcheck::run_all(seed);
            let mut failed = 0;
            for r in &reports {
                let ok = r.passed(gradcheck::TOLERANCE);
                failed += usize::from(!ok);
                println!(
                    "{} {}: {} parameters, max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e})",
                    if ok { "ok" } else { "FAIL" },
                    r.name,
                    r.checked,
                    r.max_rel_error,
                    r.worst,
                    r.analytic,
                    r.numeric
                );
            }
            if failed > 0 {
                return Err(Failure::Check(format!(
                    "{failed} gradient checks above tolerance {}",
                    gradcheck::TOLERANCE
                )));
            }
        }
        Command::Synth(a) => {
            let cfg = synth::SynthConfig {
                seed,
                n_texts: a.texts.unwrap_or(synth::SynthConfig::default().n_texts),
                separable: a.separable,
                ..synth::SynthConfig::default()
            };
            print_config("synth", g, seed, threads, json!({ "args": a, "synth": cfg }));
            ctx.claim(&a.out)?;
            if let Some(p) = &a.index_out {
                ctx.claim(p)?;
            }
            let data = synth::generate(&cfg);
            write_dataset(&a.out, &data.texts)?;
            if let Some(p) = &a.index_out {
                data.index.save(p)?;
            }
            println!("{}", DatasetStats::of(&data.texts));
        }
    }
    Ok(())
}

fn prepare_inputs(
    data: &[CqaText],
    index: &AliasIndex,
    cfg: &TrainConfig,
    k: usize,
) -> CliResult<Vec<cqael_core::pipeline::MentionInput>> {
    let m = &cfg.model;
    Ok(prepare_corpus(data, index, m.limits.context, k, m.n_max, &m.selection)?)
}

/// Divergence in any cell decides the exit status; other per-fold
/// failures are only reported.
fn fail_on_divergence<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> CliResult<()> {
    for r in reports {
        for e in &r.errors {
            eprintln!("failed: {} k {}: {e}", r.mask, r.k);
        }
        if r.diverged {
            return Err(Failure::Diverged(format!("training diverged ({}, k {})", r.mask, r.k)));
        }
    }
    Ok(())
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => EXIT_USAGE,
        Failure::Check(_) => EXIT_DATA,
        Failure::Diverged(_) => EXIT_DIVERGED,
        Failure::Core(Error::Divergence { .. }) => EXIT_DIVERGED,
        Failure::Core(Error::Config(_) | Error::InvalidArgument(_)) => EXIT_USAGE,
        Failure::Core(_) => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Check(m) | Failure::Diverged(m) => eprintln!("error: {m}"),
                Failure::Core(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
