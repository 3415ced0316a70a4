//! The non-interactive subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use restobench::benchmark::Benchmark;
use restobench::checkpoint::{Checkpoint, Model};
use restobench::corpus::Dialog;
use restobench::embeddings::{self, EmbeddingHp};
use restobench::eval::{
    default_grid, evaluate, fingerprint, markdown, read_csv, sweep as run_sweep, write_csv, GridPoint, ModelKind,
    OracleRanker, Ranker, ResultRow, EMBEDDING_TABLE, MEMNN_TABLE,
};
use restobench::features::{FeatureConfig, Resources};
use restobench::memnn::{self, MemHp};
use restobench::retrieval::{NearestNeighborRanker, TfIdfRanker};
use restobench::simulator::{corpus_stats, OracleBot, SplitName, SplitSizes, TASKS};
use restobench::training::TrainLog;

use crate::config::RunConfig;
use crate::CliError;

type CliResult<T> = Result<T, CliError>;

pub fn task(cfg: &RunConfig) -> CliResult<u8> {
    let t: u8 = cfg.parse("task")?;
    if !TASKS.contains(&t) {
        return Err(CliError::Usage(format!("task must be 1-5, got {t}")));
    }
    Ok(t)
}

pub fn model_kind(cfg: &RunConfig) -> CliResult<ModelKind> {
    let m = cfg.get("model");
    ModelKind::parse(m).ok_or_else(|| CliError::Usage(format!("unknown model `{m}`")))
}

fn learned_kind(cfg: &RunConfig) -> CliResult<ModelKind> {
    let kind = model_kind(cfg)?;
    if !kind.is_learned() {
        return Err(CliError::Usage(format!("`{}` has no parameters to train", kind.as_str())));
    }
    Ok(kind)
}

fn optional_f64(cfg: &RunConfig, key: &str) -> CliResult<Option<f64>> {
    match cfg.get(key) {
        "none" | "" => Ok(None),
        _ => Ok(Some(cfg.parse(key)?)),
    }
}

fn fmt_optional(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

/// Replaces every `auto` hyperparameter with the task's table value.
pub fn resolve_auto(cfg: &mut RunConfig, kind: ModelKind, task: u8) {
    let row = match kind {
        ModelKind::Embeddings => Some(EMBEDDING_TABLE[task as usize - 1]),
        ModelKind::MemNN => Some(MEMNN_TABLE[task as usize - 1]),
        _ => None,
    };
    match row {
        Some(row) => apply_grid_point(cfg, &row, false),
        None => cfg.resolve("use_history", FeatureConfig::default().use_history),
    }
    let (clip, init) = match kind {
        ModelKind::Embeddings => (EmbeddingHp::default().max_grad_norm, EmbeddingHp::default().init_scale),
        _ => (MemHp::default().max_grad_norm, MemHp::default().init_scale),
    };
    cfg.resolve("max_grad_norm", fmt_optional(clip));
    cfg.resolve("init_scale", init.to_string());
}

fn apply_grid_point(cfg: &mut RunConfig, p: &GridPoint, overwrite: bool) {
    let pairs = [
        ("lr", p.lr.to_string()),
        ("margin", p.margin.to_string()),
        ("dim", p.dim.to_string()),
        ("negatives", p.negatives.to_string()),
        ("hops", p.hops.to_string()),
        ("use_history", p.use_history.to_string()),
    ];
    for (k, v) in pairs {
        if overwrite {
            cfg.set(k, &v).expect("grid keys are config keys");
        } else {
            cfg.resolve(k, v);
        }
    }
}

pub fn features(cfg: &RunConfig) -> CliResult<FeatureConfig> {
    let f = FeatureConfig {
        use_history: cfg.flag("use_history")?,
        time_features: cfg.flag("time_features")?,
        speaker_features: cfg.flag("speaker_features")?,
        match_type: cfg.flag("match_type")?,
        match_type_no_history: cfg.flag("match_type_no_history")?,
        bigrams: cfg.flag("bigrams")?,
        recency_time: cfg.flag("recency_time")?,
    };
    f.validate()?;
    Ok(f)
}

/// Writes a model's feature setup back into the config so echoes stay truthful.
fn record_features(cfg: &mut RunConfig, f: &FeatureConfig) {
    let pairs = [
        ("use_history", f.use_history),
        ("time_features", f.time_features),
        ("speaker_features", f.speaker_features),
        ("match_type", f.match_type),
        ("match_type_no_history", f.match_type_no_history),
        ("bigrams", f.bigrams),
        ("recency_time", f.recency_time),
    ];
    for (k, v) in pairs {
        cfg.set(k, &v.to_string()).expect("feature keys are config keys");
    }
}

fn embedding_hp(cfg: &RunConfig) -> CliResult<EmbeddingHp> {
    let hp = EmbeddingHp {
        lr: cfg.parse("lr")?,
        margin: cfg.parse("margin")?,
        dim: cfg.parse("dim")?,
        negatives: cfg.parse("negatives")?,
        epochs: cfg.parse("epochs")?,
        seed: cfg.parse("seed")?,
        tied: cfg.flag("tied")?,
        eval_every: cfg.parse("eval_every")?,
        init_scale: cfg.parse("init_scale")?,
        max_grad_norm: optional_f64(cfg, "max_grad_norm")?,
    };
    hp.validate()?;
    Ok(hp)
}

fn mem_hp(cfg: &RunConfig) -> CliResult<MemHp> {
    let hp = MemHp {
        lr: cfg.parse("lr")?,
        dim: cfg.parse("dim")?,
        hops: cfg.parse("hops")?,
        negatives: cfg.parse("negatives")?,
        epochs: cfg.parse("epochs")?,
        seed: cfg.parse("seed")?,
        full_softmax: cfg.flag("full_softmax")?,
        eval_every: cfg.parse("eval_every")?,
        init_scale: cfg.parse("init_scale")?,
        max_grad_norm: optional_f64(cfg, "max_grad_norm")?,
        identity_r: cfg.flag("identity_r")?,
    };
    hp.validate()?;
    Ok(hp)
}

pub fn checkpoint_path(cfg: &RunConfig, kind: ModelKind, task: u8) -> PathBuf {
    match cfg.get("checkpoint") {
        "" => cfg.path("out_dir").join(format!("task{task}-{}.json", kind.as_str())),
        p => PathBuf::from(p),
    }
}

/// `<path>.config` next to an artifact, holding the resolved config.
fn write_sidecar(path: &Path, cfg: &RunConfig) -> CliResult<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".config");
    std::fs::write(PathBuf::from(name), cfg.echo())?;
    Ok(())
}

fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn load_benchmark(cfg: &RunConfig) -> CliResult<Benchmark> {
    Ok(Benchmark::read(&cfg.path("data_dir"))?)
}

pub fn generate(cfg: &RunConfig, force: bool) -> CliResult<()> {
    let dir = cfg.path("data_dir");
    let occupied = dir.exists() && std::fs::read_dir(&dir)?.next().is_some();
    if occupied && !force {
        return Err(CliError::Usage(format!(
            "{} already exists and is not empty; pass --force to overwrite it",
            dir.display()
        )));
    }
    let sizes = SplitSizes {
        train: cfg.parse("train_size")?,
        val: cfg.parse("val_size")?,
        test: cfg.parse("test_size")?,
    };
    let seed: u64 = cfg.parse("seed")?;
    let bench = Benchmark::generate(&TASKS, sizes, seed)?;
    bench.write(&dir)?;
    let stats = stats_table(&bench);
    std::fs::write(dir.join("stats.md"), &stats)?;
    std::fs::write(dir.join("config.txt"), cfg.echo())?;
    print!("{stats}");
    println!("wrote {}", dir.display());
    Ok(())
}

/// Per-task averages over the train, validation and test splits.
pub fn stats_table(bench: &Benchmark) -> String {
    let mut out = String::from("| task | dialogs | utterances/dialog | user/dialog | bot/dialog | api results/dialog |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for t in &bench.tasks {
        let dialogs: Vec<Dialog> = [SplitName::Train, SplitName::Val, SplitName::Test]
            .iter()
            .flat_map(|&s| t.split(s).dialogs.iter().cloned())
            .collect();
        let s = corpus_stats(&dialogs);
        let _ = writeln!(
            out,
            "| T{} | {} | {:.1} | {:.1} | {:.1} | {:.1} |",
            t.task, s.dialogs, s.utterances, s.user_utterances, s.bot_utterances, s.api_results
        );
    }
    let _ = writeln!(
        out,
        "\ncandidates: {}\nmodel vocabulary: {}\ncorpus vocabulary: {}",
        bench.candidates.len(),
        bench.vocabulary(false).len(),
        bench.corpus_vocabulary().len()
    );
    out
}

fn train_model(
    kind: ModelKind,
    bench: &Benchmark,
    res: &Resources,
    task: u8,
    feats: FeatureConfig,
    cfg: &RunConfig,
) -> CliResult<(Model, TrainLog)> {
    let train = bench.dialogs(task, SplitName::Train)?;
    let val = bench.dialogs(task, SplitName::Val)?;
    Ok(match kind {
        ModelKind::Embeddings => {
            let (m, log) = embeddings::fit(train, val, res, feats, &embedding_hp(cfg)?)?;
            (Model::Embeddings(m), log)
        }
        ModelKind::MemNN => {
            let (m, log) = memnn::fit(train, val, res, feats, &mem_hp(cfg)?)?;
            (Model::MemNN(m), log)
        }
        _ => unreachable!("only learned models are trained"),
    })
}

fn save_model(model: &Model, cfg: &RunConfig, path: &Path) -> CliResult<()> {
    create_parent(path)?;
    let config: BTreeMap<String, String> = cfg.entries().clone();
    let ck = match model {
        Model::Embeddings(m) => Checkpoint::from_embeddings(m, config),
        Model::MemNN(m) => Checkpoint::from_memnn(m, config),
    };
    ck.save(path)?;
    Ok(())
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub fn train(mut cfg: RunConfig) -> CliResult<()> {
    let kind = learned_kind(&cfg)?;
    let task = task(&cfg)?;
    resolve_auto(&mut cfg, kind, task);
    let feats = features(&cfg)?;
    let bench = load_benchmark(&cfg)?;
    let res = bench.resources(feats.bigrams)?;
    let start = Instant::now();
    let (model, log) = train_model(kind, &bench, &res, task, feats, &cfg)?;
    let path = checkpoint_path(&cfg, kind, task);
    save_model(&model, &cfg, &path)?;
    let curve = with_extension(&path, "curve.csv");
    log.write_csv(&curve)?;
    write_sidecar(&curve, &cfg)?;
    println!(
        "trained {} on task {task} in {:.1}s; best epoch {} (validation {})",
        kind.as_str(),
        start.elapsed().as_secs_f64(),
        log.best_epoch,
        log.best_val.map_or_else(|| "n/a".to_string(), |v| format!("{:.4}", v))
    );
    println!("checkpoint {}\ncurve {}", path.display(), curve.display());
    Ok(())
}

/// What a ranker borrows: a loaded model, the rule-based bot, or nothing.
pub enum Owned {
    Learned(Model),
    Oracle(OracleBot),
    Nothing,
}

/// Loads what `kind` needs. Learned models come from their checkpoint, whose
/// feature setup replaces the configured one.
pub fn prepare(cfg: &mut RunConfig, kind: ModelKind, task: u8, bench: &Benchmark) -> CliResult<(Owned, Resources, FeatureConfig)> {
    if kind.is_learned() {
        let path = checkpoint_path(cfg, kind, task);
        let ck = Checkpoint::read(&path)?;
        let feats = ck.features;
        record_features(cfg, &feats);
        let res = bench.resources(feats.bigrams)?;
        let model = ck.into_model(&res.vocab)?;
        let found = match model {
            Model::Embeddings(_) => ModelKind::Embeddings,
            Model::MemNN(_) => ModelKind::MemNN,
        };
        if found != kind {
            return Err(CliError::Usage(format!(
                "{} holds a {} model, not {}",
                path.display(),
                found.as_str(),
                kind.as_str()
            )));
        }
        return Ok((Owned::Learned(model), res, feats));
    }
    resolve_auto(cfg, kind, task);
    let feats = features(cfg)?;
    let res = bench.resources(feats.bigrams)?;
    let owned = match kind {
        ModelKind::RuleBased => Owned::Oracle(bench.oracle()?),
        _ => Owned::Nothing,
    };
    Ok((owned, res, feats))
}

pub fn make_ranker<'a>(
    kind: ModelKind,
    owned: &'a Owned,
    res: &'a Resources,
    feats: FeatureConfig,
    train: &[Dialog],
) -> CliResult<Box<dyn Ranker + 'a>> {
    Ok(match (kind, owned) {
        (ModelKind::RuleBased, Owned::Oracle(bot)) => Box::new(OracleRanker {
            bot,
            candidates: &res.candidates,
        }),
        (ModelKind::TfIdf, _) => Box::new(TfIdfRanker::fit(train, res, feats)?),
        (ModelKind::NearestNeighbor, _) => Box::new(NearestNeighborRanker::fit(train, res)?),
        (_, Owned::Learned(Model::Embeddings(m))) => Box::new(m.ranker(res)),
        (_, Owned::Learned(Model::MemNN(m))) => Box::new(m.ranker(res)),
        _ => unreachable!("prepare loads what every model kind needs"),
    })
}

fn variant(f: &FeatureConfig) -> String {
    let mut parts = Vec::new();
    if !f.use_history {
        parts.push("no_history");
    }
    if f.match_type {
        parts.push("match_type");
    }
    if f.match_type_no_history {
        parts.push("type_no_history");
    }
    if f.bigrams {
        parts.push("bigrams");
    }
    parts.join("+")
}

fn splits(cfg: &RunConfig) -> CliResult<Vec<SplitName>> {
    cfg.get("splits")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| SplitName::parse(s).ok_or_else(|| CliError::Usage(format!("unknown split `{s}`"))))
        .collect()
}

pub fn eval(mut cfg: RunConfig) -> CliResult<()> {
    let kind = model_kind(&cfg)?;
    let task = task(&cfg)?;
    let splits = splits(&cfg)?;
    let k: usize = cfg.parse("top_k")?;
    let bench = load_benchmark(&cfg)?;
    let (owned, res, feats) = prepare(&mut cfg, kind, task, &bench)?;
    let ranker = make_ranker(kind, &owned, &res, feats, bench.dialogs(task, SplitName::Train)?)?;
    let print = fingerprint(&cfg.echo());
    let seed: u64 = cfg.parse("seed")?;
    let mut rows = Vec::new();
    for split in splits {
        let start = Instant::now();
        let m = evaluate(ranker.as_ref(), bench.dialogs(task, split)?, &res.candidates, k)?;
        rows.push(ResultRow {
            task: format!("T{task}"),
            model: kind.as_str().to_string(),
            variant: variant(&feats),
            split: split.as_str().to_string(),
            per_response: m.per_response,
            per_dialog: m.per_dialog,
            top_k: m.top_k,
            seed,
            wall_time_s: start.elapsed().as_secs_f64(),
            fingerprint: print.clone(),
        });
    }
    let out = cfg.path("out_dir");
    std::fs::create_dir_all(&out)?;
    let csv = out.join(format!("eval-task{task}-{}.csv", kind.as_str()));
    write_csv(&rows, &csv)?;
    write_sidecar(&csv, &cfg)?;
    let table = markdown(&rows);
    let md = with_extension(&csv, "md");
    std::fs::write(&md, format!("{table}\n```\n{}```\n", cfg.echo()))?;
    print!("{table}");
    println!("results {}", csv.display());
    Ok(())
}

pub fn sweep(mut cfg: RunConfig) -> CliResult<()> {
    let kind = learned_kind(&cfg)?;
    let task = task(&cfg)?;
    resolve_auto(&mut cfg, kind, task);
    let bench = load_benchmark(&cfg)?;
    let grid = default_grid(kind, task);
    let mut configs = Vec::with_capacity(grid.len());
    let mut failure: Option<CliError> = None;
    let outcome = run_sweep(&grid, |p| {
        let mut c = cfg.clone();
        apply_grid_point(&mut c, p, true);
        let trained = features(&c).and_then(|feats| {
            let res = bench.resources(feats.bigrams)?;
            train_model(kind, &bench, &res, task, feats, &c)
        });
        let (model, log) = match trained {
            Ok(t) => t,
            Err(e) => {
                let msg = e.to_string();
                failure = Some(e);
                return Err(restobench::Error::InvalidInput(msg));
            }
        };
        let score = log.best_val.unwrap_or(0.0);
        println!(
            "lr={} margin={} dim={} negatives={} hops={} history={} -> validation {score:.4}",
            p.lr, p.margin, p.dim, p.negatives, p.hops, p.use_history
        );
        configs.push(c);
        Ok((model, score))
    });
    let outcome = match (outcome, failure) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };
    let best_index = grid.iter().position(|p| *p == outcome.best).expect("best point is in the grid");
    let best_cfg = &configs[best_index];
    let out = cfg.path("out_dir");
    std::fs::create_dir_all(&out)?;
    let csv = out.join(format!("sweep-task{task}-{}.csv", kind.as_str()));
    let mut w = csv::Writer::from_path(&csv).map_err(restobench::Error::from)?;
    w.write_record(["lr", "margin", "dim", "negatives", "hops", "use_history", "val_per_response"])
        .map_err(restobench::Error::from)?;
    for (p, s) in &outcome.scores {
        w.write_record([
            p.lr.to_string(),
            p.margin.to_string(),
            p.dim.to_string(),
            p.negatives.to_string(),
            p.hops.to_string(),
            p.use_history.to_string(),
            s.to_string(),
        ])
        .map_err(restobench::Error::from)?;
    }
    w.flush()?;
    write_sidecar(&csv, &cfg)?;
    let path = checkpoint_path(best_cfg, kind, task);
    save_model(&outcome.model, best_cfg, &path)?;
    println!("best validation {:.4}; grid {}; checkpoint {}", outcome.best_score, csv.display(), path.display());
    Ok(())
}

pub fn report(paths: &[PathBuf], out: Option<&Path>) -> CliResult<()> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_csv(p)?);
    }
    let table = markdown(&rows);
    if let Some(out) = out {
        create_parent(out)?;
        std::fs::write(out, &table)?;
    }
    print!("{table}");
    Ok(())
}
