//! The `mmrec` command line: `synth`, `prep`, `train`, `eval` and
//! `recommend`.
//!
//! Every subcommand also accepts `--config FILE`, a `key = value` file whose
//! entries are applied as if they were flags given before the real ones, so
//! explicit flags always win.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalProtocol, EvalReport, HeldOutKind, ScoringTables, DEFAULT_NEGATIVES};
use crate::graph::BipartiteGraph;
use crate::ingest::{
    load_aligned_features, load_interactions, prepare, synth_generate, write_interactions, write_mmf1, FeatureMatrix,
    IdMaps, Interaction, Modality, PrepConfig, Prepared, SynthConfig, DEFAULT_K_CORE,
};
use crate::model::{FusionMode, ModelConfig, ScoringMode};
use crate::train::{fit_with_observer, load_checkpoint, save_checkpoint, Checkpoint, TrainConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.mmck";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const VAL_REPORT_FILE: &str = "val_report.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const USER_IDS_FILE: &str = "users.idx";
pub const ITEM_IDS_FILE: &str = "items.idx";

#[derive(Debug, Parser)]
#[command(name = "mmrec", version, about = "Multimodal graph recommender")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a clustered synthetic corpus with image and text features.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Deduplicate, filter, encode and split an interaction file.
    #[command(args_override_self = true)]
    Prep(PrepArgs),
    /// Train a model and keep the best checkpoint on validation Recall@10.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Sampled-candidate Recall@K / NDCG@K of a checkpoint.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Top-K unseen items for one user.
    #[command(args_override_self = true)]
    Recommend(RecommendArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Use the bit-reproducible single-threaded code paths.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub deterministic: bool,
    /// Optional `key = value` file of default flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Suppress per-epoch progress on standard output.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub users: usize,
    #[arg(long, default_value_t = 100)]
    pub items: usize,
    #[arg(long, default_value_t = 8)]
    pub per_user: usize,
    #[arg(long, default_value_t = 5)]
    pub clusters: usize,
    #[arg(long, default_value_t = 64)]
    pub d_img: usize,
    #[arg(long, default_value_t = 32)]
    pub d_txt: usize,
    /// Replace one modality's features with pure noise.
    #[arg(long)]
    pub noisy_modality: Option<ModalityArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModalityArg {
    Image,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub interactions: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K_CORE)]
    pub k_core: usize,
    /// Skip the validation hold-out (requires --no-early-stopping to train).
    #[arg(long)]
    pub no_validation: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    #[arg(long)]
    pub img_features: PathBuf,
    #[arg(long)]
    pub txt_features: PathBuf,
    /// Keep raw feature rows instead of scaling them to unit length.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PrepArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Hidden width of the policy scoring network.
    #[arg(long, default_value_t = 128)]
    pub h: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub neg_ratio: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long)]
    pub no_early_stopping: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20])]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_NEGATIVES)]
    pub eval_negatives: usize,
    /// `dot` or `policy`.
    #[arg(long, default_value = "dot", value_parser = parse_scoring)]
    pub scoring: ScoringMode,
    /// `gated` or `fixed:<g>` for a constant gate.
    #[arg(long, default_value = "gated", value_parser = parse_fusion)]
    pub fusion: FusionMode,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory for the written report; printing only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20])]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_NEGATIVES)]
    pub negatives: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Test,
    Validation,
}

#[derive(Debug, Clone, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// User token as it appears in the interaction file.
    #[arg(long)]
    pub user: String,
    #[arg(long, short, default_value_t = 20)]
    pub k: usize,
}

fn parse_scoring(s: &str) -> std::result::Result<ScoringMode, String> {
    ScoringMode::parse(s).map_err(|e| e.to_string())
}

fn parse_fusion(s: &str) -> std::result::Result<FusionMode, String> {
    if s == "gated" {
        return Ok(FusionMode::Gated);
    }
    s.strip_prefix("fixed:")
        .and_then(|g| g.parse::<f64>().ok())
        .filter(|g| (0.0..=1.0).contains(g))
        .map(FusionMode::Fixed)
        .ok_or_else(|| format!("expected `gated` or `fixed:<g>` with g in [0, 1], got {s:?}"))
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parse `args` (including the program name) and run the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Splice `--config FILE` entries in right after the subcommand name.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (k, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(k + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut extra: Vec<OsString> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        let key = key.trim().replace('_', "-");
        match value.trim() {
            "true" if key != "deterministic" => extra.push(format!("--{key}").into()),
            "false" if key != "deterministic" => {}
            v => {
                extra.push(format!("--{key}").into());
                extra.push(v.into());
            }
        }
    }
    if args.len() < 2 {
        return Ok(args);
    }
    let mut out = args[..2].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

fn dispatch(cmd: Command) -> Result<()> {
    let shared = match &cmd {
        Command::Synth(a) => &a.shared,
        Command::Prep(a) => &a.shared,
        Command::Train(a) => &a.shared,
        Command::Eval(a) => &a.shared,
        Command::Recommend(a) => &a.shared,
    };
    if shared.threads > 0 {
        // A second initialization (as in tests running in-process) is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(shared.threads)
            .build_global();
    }
    match cmd {
        Command::Synth(a) => run_synth(&a),
        Command::Prep(a) => run_prep(&a),
        Command::Train(a) => run_train(&a),
        Command::Eval(a) => run_eval(&a),
        Command::Recommend(a) => run_recommend(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut s = lines.join("\n");
    s.push('\n');
    write_file(path, s)
}

pub fn run_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_users: a.users,
        n_items: a.items,
        per_user: a.per_user,
        n_clusters: a.clusters,
        d_img: a.d_img,
        d_txt: a.d_txt,
        noisy_modality: a.noisy_modality.map(|m| match m {
            ModalityArg::Image => Modality::Image,
            ModalityArg::Text => Modality::Text,
        }),
        seed: a.shared.seed,
        ..SynthConfig::default()
    };
    let corpus = synth_generate(&cfg)?;
    create_dir(&a.out)?;
    write_interactions(a.out.join("interactions.tsv"), &corpus.interactions)?;
    write_mmf1(a.out.join("image.mmf1"), corpus.image.matrix())?;
    write_mmf1(a.out.join("text.mmf1"), corpus.text.matrix())?;
    write_lines(&a.out.join("items.txt"), &corpus.item_tokens)?;
    let manifest = json!({
        "generator": "clustered",
        "seed": cfg.seed,
        "users": cfg.n_users,
        "items": cfg.n_items,
        "per_user": cfg.per_user,
        "clusters": cfg.n_clusters,
        "d_img": cfg.d_img,
        "d_txt": cfg.d_txt,
        "in_cluster_prob": cfg.in_cluster_prob,
        "core_size": cfg.core_size,
        "tail_weight": cfg.tail_weight,
        "feature_noise": cfg.feature_noise,
        "noisy_modality": cfg.noisy_modality.map(|m| format!("{m:?}").to_lowercase()),
        "interactions": corpus.interactions.len(),
        "files": ["interactions.tsv", "image.mmf1", "text.mmf1", "items.txt"],
    });
    write_file(
        &a.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("json") + "\n",
    )?;
    if !a.shared.quiet {
        println!(
            "{}",
            json!({"wrote": a.out.display().to_string(), "interactions": corpus.interactions.len()})
        );
    }
    Ok(())
}

fn prep_config(d: &DataArgs, seed: u64) -> PrepConfig {
    PrepConfig {
        seed,
        k_core: d.k_core,
        with_validation: !d.no_validation,
    }
}

fn load_prepared(d: &DataArgs, seed: u64) -> Result<Prepared> {
    let raw = load_interactions(&d.interactions)?;
    prepare(raw, &prep_config(d, seed))
}

fn load_features(f: &FeatureArgs, ids: &IdMaps) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let image = load_aligned_features(&f.img_features, ids, !f.no_normalize)?;
    let text = load_aligned_features(&f.txt_features, ids, !f.no_normalize)?;
    Ok((image, text))
}

pub fn run_prep(a: &PrepArgs) -> Result<()> {
    let p = load_prepared(&a.data, a.shared.seed)?;
    create_dir(&a.out)?;
    let ids = &p.ids;
    let record =
        |user: usize, item: usize, t: u64| Interaction::new(ids.user_token(user), ids.item_token(item), Some(t));
    let train: Vec<Interaction> = p
        .split
        .train
        .iter()
        .map(|r| record(r.user, r.item, r.timestamp))
        .collect();
    let validation: Vec<Interaction> = p
        .split
        .validation
        .iter()
        .map(|r| record(r.user, r.item, r.timestamp))
        .collect();
    let test: Vec<Interaction> = p
        .split
        .test
        .iter()
        .map(|r| record(r.user, r.item, r.timestamp))
        .collect();
    write_interactions(a.out.join("train.tsv"), &train)?;
    write_interactions(a.out.join("validation.tsv"), &validation)?;
    write_interactions(a.out.join("test.tsv"), &test)?;
    write_lines(&a.out.join(USER_IDS_FILE), ids.user_tokens())?;
    write_lines(&a.out.join(ITEM_IDS_FILE), ids.item_tokens())?;
    let summary = json!({
        "seed": a.shared.seed,
        "k_core": a.data.k_core,
        "users": p.split.n_users,
        "items": p.split.n_items,
        "train": train.len(),
        "validation": validation.len(),
        "test": test.len(),
        "filtered_out": p.filtered_out,
    });
    write_file(&a.out.join("prep_summary.json"), summary.to_string() + "\n")?;
    println!("{summary}");
    Ok(())
}

pub fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        d: a.d,
        h: a.h,
        gcn_layers: a.layers,
        lr: a.lr,
        batch_size: a.batch_size,
        neg_ratio: a.neg_ratio,
        max_epochs: a.epochs,
        patience: a.patience,
        early_stopping: !a.no_early_stopping,
        eval_ks: a.ks.clone(),
        eval_negatives: a.eval_negatives,
        seed: a.shared.seed,
        scoring: a.scoring,
        fusion: a.fusion,
        parallel: !a.shared.deterministic,
    }
}

pub fn run_train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a);
    cfg.validate()?;
    let p = load_prepared(&a.data, a.shared.seed)?;
    let (image, text) = load_features(&a.features, &p.ids)?;
    create_dir(&a.out)?;
    let written = [
        CHECKPOINT_FILE,
        TRAIN_LOG_FILE,
        VAL_REPORT_FILE,
        USER_IDS_FILE,
        ITEM_IDS_FILE,
    ];
    let result = train_outputs(a, &cfg, &p, &image, &text);
    if result.is_err() {
        for f in written {
            let _ = fs::remove_file(a.out.join(f));
        }
    }
    result
}

fn train_outputs(
    a: &TrainArgs,
    cfg: &TrainConfig,
    p: &Prepared,
    image: &FeatureMatrix,
    text: &FeatureMatrix,
) -> Result<()> {
    let log_path = a.out.join(TRAIN_LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    let quiet = a.shared.quiet;
    let outcome = fit_with_observer(&p.split, image, text, cfg, |rec| {
        let line = rec.to_json().to_string();
        if !quiet {
            println!("{line}");
        }
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    save_checkpoint(a.out.join(CHECKPOINT_FILE), &outcome.best)?;
    write_lines(&a.out.join(USER_IDS_FILE), p.ids.user_tokens())?;
    write_lines(&a.out.join(ITEM_IDS_FILE), p.ids.item_tokens())?;

    // Report the selected checkpoint as stored, i.e. at storage precision.
    let stored = Checkpoint::decode(&outcome.best.encode()?)?;
    let report = if p.split.validation.is_empty() {
        json!({"split": "validation", "users": 0})
    } else {
        let graph = BipartiteGraph::build(&p.split.train_pairs(), p.split.n_users, p.split.n_items)?;
        let protocol = EvalProtocol {
            n_negatives: cfg.eval_negatives,
            seed: cfg.seed,
            ks: cfg.eval_ks.clone(),
            target: HeldOutKind::Validation,
        };
        let mut r = evaluate(
            &stored.params,
            &cfg.model_config(),
            &graph,
            &p.split,
            image,
            text,
            &protocol,
        )?
        .to_json();
        r["best_epoch"] = json!(outcome.best.epoch);
        r["epochs_run"] = json!(outcome.log.len());
        r
    };
    write_file(&a.out.join(VAL_REPORT_FILE), report.to_string() + "\n")?;
    if !quiet {
        println!("{report}");
    }
    Ok(())
}

/// Everything needed to score with a saved model.
struct Loaded {
    prepared: Prepared,
    checkpoint: Checkpoint,
    config: ModelConfig,
    graph: BipartiteGraph,
    image: FeatureMatrix,
    text: FeatureMatrix,
}

fn load_model(shared: &Shared, data: &DataArgs, features: &FeatureArgs, ckpt_path: &Path) -> Result<Loaded> {
    let checkpoint = load_checkpoint(ckpt_path)?;
    let prepared = load_prepared(data, shared.seed)?;
    let (image, text) = load_features(features, &prepared.ids)?;
    let dims = checkpoint.params.dims;
    let data_side = (prepared.split.n_users, prepared.split.n_items, image.dim(), text.dim());
    if (dims.n_users, dims.n_items, dims.d_img, dims.d_txt) != data_side {
        return Err(Error::Shape(format!(
            "checkpoint {} has users/items/d_img/d_txt = {}/{}/{}/{}, data has {}/{}/{}/{}",
            ckpt_path.display(),
            dims.n_users,
            dims.n_items,
            dims.d_img,
            dims.d_txt,
            data_side.0,
            data_side.1,
            data_side.2,
            data_side.3
        )));
    }
    if let Some(dir) = ckpt_path.parent() {
        check_id_file(&dir.join(USER_IDS_FILE), prepared.ids.user_tokens())?;
        check_id_file(&dir.join(ITEM_IDS_FILE), prepared.ids.item_tokens())?;
    }
    let mut config = TrainConfig::model_config_from_echo(&checkpoint.config_echo)?;
    config.parallel = !shared.deterministic;
    let graph = BipartiteGraph::build(
        &prepared.split.train_pairs(),
        prepared.split.n_users,
        prepared.split.n_items,
    )?;
    Ok(Loaded {
        prepared,
        checkpoint,
        config,
        graph,
        image,
        text,
    })
}

/// When the training run's id files sit next to the checkpoint, the data
/// must re-encode to exactly the same tokens.
fn check_id_file(path: &Path, tokens: &[String]) -> Result<()> {
    let Ok(saved) = fs::read_to_string(path) else {
        return Ok(());
    };
    let saved: Vec<&str> = saved.lines().filter(|l| !l.is_empty()).collect();
    if saved.len() != tokens.len() || saved.iter().zip(tokens).any(|(a, b)| *a != b) {
        return Err(Error::Consistency(format!(
            "{} does not match the ids produced from the given data and seed",
            path.display()
        )));
    }
    Ok(())
}

pub fn eval_report(a: &EvalArgs) -> Result<EvalReport> {
    let m = load_model(&a.shared, &a.data, &a.features, &a.checkpoint)?;
    let protocol = EvalProtocol {
        n_negatives: a.negatives,
        seed: a.shared.seed,
        ks: a.ks.clone(),
        target: match a.split {
            SplitArg::Test => HeldOutKind::Test,
            SplitArg::Validation => HeldOutKind::Validation,
        },
    };
    evaluate(
        &m.checkpoint.params,
        &m.config,
        &m.graph,
        &m.prepared.split,
        &m.image,
        &m.text,
        &protocol,
    )
}

pub fn run_eval(a: &EvalArgs) -> Result<()> {
    let report = eval_report(a)?;
    let line = report.to_json_line();
    println!("{line}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_file(&dir.join(EVAL_REPORT_FILE), line + "\n")?;
    }
    Ok(())
}

/// `(item index, score)` of the top `k` items outside the user's training
/// positives, by descending score with ties to the lower index.
pub fn recommend_for(tables: &ScoringTables, train_pos: &[usize], user: usize, k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = (0..tables.items.rows())
        .filter(|i| train_pos.binary_search(i).is_err())
        .map(|i| (i, tables.score(user, i)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn run_recommend(a: &RecommendArgs) -> Result<()> {
    let m = load_model(&a.shared, &a.data, &a.features, &a.checkpoint)?;
    let user = m.prepared.ids.user(&a.user).ok_or_else(|| Error::Unknown {
        kind: "user",
        token: a.user.clone(),
    })?;
    let tables = ScoringTables::build(&m.checkpoint.params, &m.config, &m.graph, &m.image, &m.text)?;
    let mut out = std::io::stdout().lock();
    for (rank, (item, score)) in recommend_for(&tables, &m.prepared.split.train_pos[user], user, a.k)
        .into_iter()
        .enumerate()
    {
        let line = json!({
            "user": a.user,
            "rank": rank + 1,
            "item": m.prepared.ids.item_token(item),
            "score": score,
        });
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}
