use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use subnav::agent::{
    rollout, toy_model_config, toy_vocab, toy_worlds, train_toy, ActionForcing, RolloutConfig,
    ShiftEvent, ShiftForcing, SyntheticFeatures, ToyWorldConfig, TrainConfig,
};
use subnav::analysis::{
    cluster_summary, complete_linkage_cluster, similarity_matrix, subinstruction_results,
    Segmentation, SubInstructionResult,
};
use subnav::chunker::ChunkingConfig;
use subnav::conllu::parse_conllu_documents;
use subnav::dataset::{
    chunk_r2r, concat_to_r4r, corpus_stats, episodes_to_json, load_episodes, load_fgr2r,
    load_fgr2r_lenient, normalize_for_training, validate_episode_file, Episode, EpisodeRecord,
    Fgr2rFields,
};
use subnav::metrics::{aggregate, confusion_stats, evaluate_episode, ConfusionRates, ShiftConfusion};
use subnav::neural::{grad_check, Checkpoint, GradCheckBundle, ModelConfig, ModelParams};

use crate::{plot_trajectory, Context, Format};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split dependency-parsed instructions into sub-instructions.
    Chunk(ChunkArgs),
    /// Check an episode file against the alignment invariants.
    Validate(ValidateArgs),
    /// Corpus statistics of sub-instructions and sub-paths.
    Stats(StatsArgs),
    /// Score trajectories: PL, NE, SR, OSR, SPL, nDTW and shift confusion.
    Eval(EvalArgs),
    /// Accuracy, precision, recall and F1 of shift predictions.
    ShiftReport(ShiftReportArgs),
    /// Cluster sub-instructions and rank clusters by mean distance.
    Cluster(ClusterArgs),
    /// Roll a trained agent out on episodes and write trajectories.
    Rollout(RolloutArgs),
    /// Train the agent on synthetic worlds.
    TrainToy(TrainToyArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate synthetic worlds with templated episodes.
    GenToy(GenToyArgs),
    /// Draw an episode and a trajectory as SVG.
    Plot(PlotArgs),
    /// Join pairs of nearby episodes into longer ones.
    R4rConcat(R4rArgs),
}

impl Command {
    pub fn describe(&self) -> (&'static str, serde_json::Value) {
        let v = |a: &dyn erased::Ser| a.value();
        match self {
            Command::Chunk(a) => ("chunk", v(a)),
            Command::Validate(a) => ("validate", v(a)),
            Command::Stats(a) => ("stats", v(a)),
            Command::Eval(a) => ("eval", v(a)),
            Command::ShiftReport(a) => ("shift-report", v(a)),
            Command::Cluster(a) => ("cluster", v(a)),
            Command::Rollout(a) => ("rollout", v(a)),
            Command::TrainToy(a) => ("train-toy", v(a)),
            Command::Gradcheck(a) => ("gradcheck", v(a)),
            Command::GenToy(a) => ("gen-toy", v(a)),
            Command::Plot(a) => ("plot", v(a)),
            Command::R4rConcat(a) => ("r4r-concat", v(a)),
        }
    }

    /// `Ok(false)` reports a failed check.
    pub fn execute(&self, ctx: &mut Context) -> anyhow::Result<bool> {
        match self {
            Command::Chunk(a) => chunk(ctx, a),
            Command::Validate(a) => validate(ctx, a),
            Command::Stats(a) => stats(ctx, a),
            Command::Eval(a) => eval(ctx, a),
            Command::ShiftReport(a) => shift_report(ctx, a),
            Command::Cluster(a) => cluster(ctx, a),
            Command::Rollout(a) => run_rollout(ctx, a),
            Command::TrainToy(a) => train(ctx, a),
            Command::Gradcheck(a) => gradcheck(ctx, a),
            Command::GenToy(a) => gen_toy(ctx, a),
            Command::Plot(a) => plot(ctx, a),
            Command::R4rConcat(a) => r4r(ctx, a),
        }
    }
}

mod erased {
    pub trait Ser {
        fn value(&self) -> serde_json::Value;
    }

    impl<T: serde::Serialize> Ser for T {
        fn value(&self) -> serde_json::Value {
            serde_json::to_value(self).unwrap_or_default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ChunkArgs {
    /// CoNLL-U file; instructions are separated by `# text_id = <id>`.
    #[arg(long)]
    pub conllu: PathBuf,
    #[arg(long)]
    pub min_words: Option<usize>,
    /// JSON object with optional `actions` and `connectives` word lists.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// R2R path records; parses are matched on `<path_id>_<k>`.
    #[arg(long)]
    pub r2r: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub episodes: PathBuf,
    /// Input uses the released fine-grained annotation layout.
    #[arg(long)]
    pub fgr2r: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// One or more episode files, pooled.
    #[arg(long, required = true, num_args = 1..)]
    pub episodes: Vec<PathBuf>,
    #[arg(long)]
    pub fgr2r: bool,
    /// Fold single-viewpoint sub-instructions into their neighbours first.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub episodes: PathBuf,
    #[arg(long)]
    pub trajectories: PathBuf,
    #[arg(long)]
    pub fgr2r: bool,
    /// Success radius in meters.
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentationArg {
    Predicted,
    GroundTruth,
}

#[derive(Debug, Args, Serialize)]
pub struct ShiftReportArgs {
    /// Trajectory file with per-step shift records.
    #[arg(long, required_unless_present = "counts")]
    pub trajectories: Option<PathBuf>,
    /// Confusion counts given directly as `TP,TN,FP,FN`.
    #[arg(long, conflicts_with = "trajectories")]
    pub counts: Option<String>,
    /// Episodes; needed with --results-out.
    #[arg(long)]
    pub episodes: Option<PathBuf>,
    #[arg(long)]
    pub fgr2r: bool,
    /// Write per-sub-instruction results for `cluster` to this file.
    #[arg(long, requires = "episodes")]
    pub results_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SegmentationArg::Predicted)]
    pub segmentation: SegmentationArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    /// Per-sub-instruction results written by `shift-report --results-out`.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(short, long, default_value_t = 100)]
    pub k: usize,
    /// Only print the first and last N ranked clusters.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftArg {
    Teacher,
    Predicted,
}

#[derive(Debug, Args, Serialize)]
pub struct RolloutArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub episodes: PathBuf,
    #[arg(long)]
    pub fgr2r: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Student)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ShiftArg::Predicted)]
    pub shift: ShiftArg,
    #[arg(long, default_value_t = 20)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Sample student actions instead of taking the most probable one.
    #[arg(long)]
    pub sample: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainToyArgs {
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 5)]
    pub worlds: usize,
    #[arg(long, default_value_t = 10)]
    pub nodes: usize,
    #[arg(long, default_value_t = 8)]
    pub episodes_per_world: usize,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 20)]
    pub eval_every: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GenToyArgs {
    #[arg(long, default_value_t = 1)]
    pub worlds: usize,
    #[arg(long, default_value_t = 10)]
    pub nodes: usize,
    #[arg(long, default_value_t = 8)]
    pub episodes_per_world: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    #[arg(long)]
    pub episodes: PathBuf,
    #[arg(long)]
    pub fgr2r: bool,
    /// Path id of the episode to draw.
    #[arg(long)]
    pub episode: String,
    /// Trajectory file; the ground-truth path is replayed when absent.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct R4rArgs {
    #[arg(long)]
    pub episodes: PathBuf,
    #[arg(long)]
    pub fgr2r: bool,
    #[arg(long)]
    pub max_pairs: Option<usize>,
}

/// One step's shift prediction as stored in a trajectory file. Only `step`,
/// `predicted` and `ground_truth` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub step: usize,
    pub predicted: bool,
    pub ground_truth: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_idx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advanced: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewpoint: Option<String>,
}

impl ShiftRecord {
    fn from_event(e: &ShiftEvent) -> Self {
        ShiftRecord {
            step: e.step,
            predicted: e.predicted,
            ground_truth: e.ground_truth,
            p_shift: Some(e.p_shift),
            sub_idx: Some(e.sub_idx),
            advanced: Some(e.advanced),
            viewpoint: Some(e.viewpoint.clone()),
        }
    }

    fn to_event(&self, path_id: &str) -> anyhow::Result<ShiftEvent> {
        let missing = |f: &str| anyhow!("{path_id}: shift record at step {} lacks `{f}`", self.step);
        Ok(ShiftEvent {
            step: self.step,
            p_shift: self.p_shift.unwrap_or(f64::from(u8::from(self.predicted))),
            predicted: self.predicted,
            ground_truth: self.ground_truth,
            sub_idx: self.sub_idx.ok_or_else(|| missing("sub_idx"))?,
            advanced: self.advanced.ok_or_else(|| missing("advanced"))?,
            viewpoint: self.viewpoint.clone().ok_or_else(|| missing("viewpoint"))?,
        })
    }
}

/// Entry of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub path_id: String,
    pub trajectory: Vec<String>,
    #[serde(default)]
    pub shifts: Vec<ShiftRecord>,
}

fn load_episode_file(ctx: &mut Context, path: &Path, fgr2r: bool) -> anyhow::Result<Vec<Episode>> {
    let text = ctx.read(path)?;
    let episodes = if fgr2r {
        load_fgr2r(&text, &Fgr2rFields::default())
    } else {
        load_episodes(&text)
    };
    episodes.with_context(|| format!("loading {}", path.display()))
}

fn load_trajectories(ctx: &mut Context, path: &Path) -> anyhow::Result<Vec<TrajectoryRecord>> {
    let text = ctx.read(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn json<T: Serialize + ?Sized>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn rate(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"))
}

fn chunk(ctx: &mut Context, a: &ChunkArgs) -> anyhow::Result<bool> {
    let mut config = ChunkingConfig::default();
    if let Some(n) = a.min_words {
        config.min_chunk_words = n;
    }
    if let Some(path) = &a.lexicon {
        #[derive(Deserialize)]
        struct Lexicon {
            actions: Option<BTreeSet<String>>,
            connectives: Option<BTreeSet<String>>,
        }
        let lex: Lexicon = serde_json::from_str(&ctx.read(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        if let Some(words) = lex.actions {
            config.action_lexicon = words;
        }
        if let Some(words) = lex.connectives {
            config.connective_lexicon = words;
        }
    }
    let parses = parse_conllu_documents(&ctx.read(&a.conllu)?)
        .with_context(|| format!("parsing {}", a.conllu.display()))?;
    let records = match &a.r2r {
        Some(path) => chunk_r2r(&ctx.read(path)?, &parses, &config)?,
        None => {
            let mut out = Vec::with_capacity(parses.len());
            for (k, p) in parses.iter().enumerate() {
                let id = p.text_id.clone().unwrap_or_else(|| format!("instr{k}"));
                let subs = subnav::chunker::chunk_instruction(p, &config)
                    .with_context(|| format!("chunking {id}"))?;
                out.push(EpisodeRecord {
                    path_id: id,
                    scan: String::new(),
                    heading: 0.0,
                    path: Vec::new(),
                    instruction: p
                        .tokens()
                        .map(|(_, t)| t.form.as_str())
                        .collect::<Vec<_>>()
                        .join(" "),
                    sub_instructions: subs.into_iter().map(|s| s.words).collect(),
                    sub_paths: None,
                });
            }
            out
        }
    };
    let text = match ctx.format {
        Format::Structured => json(&records)?,
        Format::Tsv => {
            let mut s = String::from("path_id\tsub\ttext\n");
            for r in &records {
                for (i, w) in r.sub_instructions.iter().enumerate() {
                    let _ = writeln!(s, "{}\t{}\t{}", r.path_id, i + 1, w.join(" "));
                }
            }
            s
        }
    };
    ctx.emit(&text)?;
    Ok(true)
}

fn validate(ctx: &mut Context, a: &ValidateArgs) -> anyhow::Result<bool> {
    let text = ctx.read(&a.episodes)?;
    let (valid, mut violations): (Vec<Episode>, Vec<String>) = if a.fgr2r {
        let (eps, rejected) = load_fgr2r_lenient(&text, &Fgr2rFields::default())?;
        (eps, rejected.iter().map(ToString::to_string).collect())
    } else {
        let errors = validate_episode_file(&text)?;
        let records: Vec<EpisodeRecord> = serde_json::from_str(&text)?;
        let eps = records
            .into_iter()
            .filter_map(|r| r.into_episode().ok())
            .collect();
        (eps, errors.iter().map(ToString::to_string).collect())
    };
    if ctx.graph_dir.is_some() {
        for ep in &valid {
            let graph = ctx.graph(&ep.scan)?;
            if let Err(e) = ep.validate_in(graph) {
                violations.push(e.to_string());
            }
        }
    }
    let checked = valid.len() + violations.len();
    let text = match ctx.format {
        Format::Structured => json(&serde_json::json!({
            "episodes": checked,
            "violations": violations,
        }))?,
        Format::Tsv => {
            let mut s = String::new();
            for v in &violations {
                let _ = writeln!(s, "violation\t{v}");
            }
            let _ = writeln!(s, "checked\t{}\nviolations\t{}", valid.len(), violations.len());
            s
        }
    };
    ctx.emit(&text)?;
    Ok(violations.is_empty())
}

fn stats(ctx: &mut Context, a: &StatsArgs) -> anyhow::Result<bool> {
    let mut episodes = Vec::new();
    for path in &a.episodes {
        let text = ctx.read(path)?;
        if a.fgr2r {
            let (eps, rejected) = load_fgr2r_lenient(&text, &Fgr2rFields::default())?;
            if !rejected.is_empty() {
                log::warn!("{}: skipped {} invalid episodes", path.display(), rejected.len());
            }
            episodes.extend(eps);
        } else {
            episodes.extend(load_episodes(&text)?);
        }
    }
    if a.normalize {
        episodes = episodes.iter().map(normalize_for_training).collect();
    }
    let s = corpus_stats(&episodes).ok_or_else(|| anyhow!("no episodes"))?;
    let text = match ctx.format {
        Format::Structured => json(&s)?,
        Format::Tsv => {
            let mut t = String::new();
            let _ = writeln!(t, "episodes\t{}", s.episodes);
            let _ = writeln!(t, "sub_instructions\t{}", s.sub_instructions);
            let _ = writeln!(t, "mean_subinstr_per_instr\t{:.3}", s.mean_subinstr_per_instr);
            let _ = writeln!(t, "mean_words_per_subinstr\t{:.3}", s.mean_words_per_subinstr);
            let _ = writeln!(t, "mean_viewpoints_per_subinstr\t{:.3}", s.mean_viewpoints_per_subinstr);
            let _ = writeln!(t, "min_viewpoints\t{}", s.min_viewpoints);
            let _ = writeln!(t, "max_viewpoints\t{}", s.max_viewpoints);
            for (k, n) in &s.viewpoint_histogram {
                let _ = writeln!(t, "viewpoints={k}\t{n}");
            }
            for (k, n) in &s.subinstr_histogram {
                let _ = writeln!(t, "sub_instructions={k}\t{n}");
            }
            t
        }
    };
    ctx.emit(&text)?;
    Ok(true)
}

fn confusion_of(records: &[TrajectoryRecord]) -> ShiftConfusion {
    let mut c = ShiftConfusion::default();
    for r in records {
        for s in &r.shifts {
            c.record(s.predicted, s.ground_truth);
        }
    }
    c
}

fn eval(ctx: &mut Context, a: &EvalArgs) -> anyhow::Result<bool> {
    let episodes = load_episode_file(ctx, &a.episodes, a.fgr2r)?;
    let records = load_trajectories(ctx, &a.trajectories)?;
    let mut rows = Vec::new();
    for r in &records {
        let ep = episodes
            .iter()
            .find(|e| e.path_id == r.path_id)
            .ok_or_else(|| anyhow!("trajectory for unknown episode {}", r.path_id))?;
        let graph = ctx.graph(&ep.scan)?;
        let result = evaluate_episode(graph, &r.trajectory, ep, a.threshold)
            .with_context(|| format!("evaluating {}", r.path_id))?;
        rows.push((r.path_id.clone(), result));
    }
    let results: Vec<_> = rows.iter().map(|(_, r)| *r).collect();
    let agg = aggregate(&results);
    let confusion = confusion_of(&records);
    let rates = (confusion.total() > 0).then(|| confusion_stats(&confusion));
    let text = match ctx.format {
        Format::Structured => json(&serde_json::json!({
            "episodes": rows.iter().map(|(id, r)| serde_json::json!({"path_id": id, "result": r})).collect::<Vec<_>>(),
            "aggregate": agg,
            "shift_confusion": (confusion.total() > 0).then_some(confusion),
            "shift_rates": rates,
        }))?,
        Format::Tsv => {
            let mut s = String::from("path_id\tpl\tne\tsr\tosr\tspl\tndtw\n");
            for (id, r) in &rows {
                let _ = writeln!(
                    s,
                    "{id}\t{:.3}\t{:.3}\t{}\t{}\t{:.3}\t{:.3}",
                    r.pl,
                    r.ne,
                    u8::from(r.success),
                    u8::from(r.oracle_success),
                    r.spl,
                    r.ndtw
                );
            }
            if let Some(g) = agg {
                let _ = writeln!(
                    s,
                    "mean\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
                    g.pl, g.ne, g.sr, g.osr, g.spl, g.ndtw
                );
            }
            if let Some(rt) = rates {
                s.push_str(&rates_table(&confusion, &rt));
            }
            s
        }
    };
    ctx.emit(&text)?;
    Ok(true)
}

fn rates_table(c: &ShiftConfusion, r: &ConfusionRates) -> String {
    format!(
        "tp\ttn\tfp\tfn\taccuracy\tprecision\trecall\tf1\n{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        c.tp,
        c.tn,
        c.fp,
        c.fn_,
        rate(r.accuracy),
        rate(r.precision),
        rate(r.recall),
        rate(r.f1)
    )
}

fn parse_counts(s: &str) -> anyhow::Result<ShiftConfusion> {
    let v: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("counts `{s}` are not four integers"))?;
    match v[..] {
        [tp, tn, fp, fn_] => Ok(ShiftConfusion::new(tp, tn, fp, fn_)),
        _ => bail!("expected TP,TN,FP,FN, got {} values", v.len()),
    }
}

fn shift_report(ctx: &mut Context, a: &ShiftReportArgs) -> anyhow::Result<bool> {
    let (confusion, records) = match (&a.counts, &a.trajectories) {
        (Some(c), _) => (parse_counts(c)?, Vec::new()),
        (None, Some(path)) => {
            let records = load_trajectories(ctx, path)?;
            (confusion_of(&records), records)
        }
        (None, None) => bail!("either --counts or --trajectories is required"),
    };
    if let Some(out) = &a.results_out {
        let path = a.episodes.as_ref().expect("clap enforces --episodes");
        let episodes = load_episode_file(ctx, path, a.fgr2r)?;
        let segmentation = match a.segmentation {
            SegmentationArg::Predicted => Segmentation::Predicted,
            SegmentationArg::GroundTruth => Segmentation::GroundTruth,
        };
        let mut results: Vec<SubInstructionResult> = Vec::new();
        for r in &records {
            let ep = episodes
                .iter()
                .find(|e| e.path_id == r.path_id)
                .ok_or_else(|| anyhow!("trajectory for unknown episode {}", r.path_id))?;
            let events = r
                .shifts
                .iter()
                .map(|s| s.to_event(&r.path_id))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let graph = ctx.graph(&ep.scan)?;
            results.extend(subinstruction_results(graph, ep, &r.trajectory, &events, segmentation)?);
        }
        fs::write(out, json(&results)?).with_context(|| format!("writing {}", out.display()))?;
    }
    let text = if confusion.total() == 0 {
        bail!("no shift predictions to report");
    } else {
        let rates = confusion_stats(&confusion);
        match ctx.format {
            Format::Structured => json(&serde_json::json!({"confusion": confusion, "rates": rates}))?,
            Format::Tsv => rates_table(&confusion, &rates),
        }
    };
    ctx.emit(&text)?;
    Ok(true)
}

fn cluster(ctx: &mut Context, a: &ClusterArgs) -> anyhow::Result<bool> {
    let text = ctx.read(&a.results)?;
    let results: Vec<SubInstructionResult> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.results.display()))?;
    if results.is_empty() {
        bail!("no sub-instruction results");
    }
    let words: Vec<Vec<String>> = results.iter().map(|r| r.words.clone()).collect();
    let matrix = similarity_matrix::<f64, String>(&words);
    let assignment = complete_linkage_cluster(&matrix, a.k)?;
    let records: Vec<Option<SubInstructionResult>> = results.into_iter().map(Some).collect();
    let mut summary = cluster_summary(&assignment, &matrix, &records)?;
    if let Some(n) = a.top {
        if summary.len() > 2 * n {
            summary.drain(n..summary.len() - n);
        }
    }
    let text = match ctx.format {
        Format::Structured => json(&summary)?,
        Format::Tsv => {
            let mut s = String::from("rank\tmean_distance\tmean_ndtw\tf\tmean_viewpoints\trepresentative\n");
            for c in &summary {
                let _ = writeln!(
                    s,
                    "{}\t{:.2}\t{:.2}\t{}\t{:.1}\t{}",
                    c.rank, c.mean_distance, c.mean_ndtw, c.frequency, c.mean_viewpoints, c.representative
                );
            }
            s
        }
    };
    ctx.emit(&text)?;
    Ok(true)
}

fn run_rollout(ctx: &mut Context, a: &RolloutArgs) -> anyhow::Result<bool> {
    let checkpoint: Checkpoint = serde_json::from_str(&ctx.read(&a.checkpoint)?)
        .with_context(|| format!("parsing {}", a.checkpoint.display()))?;
    let params: ModelParams<f64> = checkpoint.to_params()?;
    let features = SyntheticFeatures::default();
    if features.feature_dim() != params.config.feature_dim {
        bail!(
            "checkpoint expects {}-d features, synthetic features have {}",
            params.config.feature_dim,
            features.feature_dim()
        );
    }
    let episodes = load_episode_file(ctx, &a.episodes, a.fgr2r)?;
    let config = RolloutConfig {
        action_forcing: match a.mode {
            ModeArg::Teacher => ActionForcing::Teacher,
            ModeArg::Student => ActionForcing::Student,
        },
        shift_forcing: match a.shift {
            ShiftArg::Teacher => ShiftForcing::Teacher,
            ShiftArg::Predicted => ShiftForcing::Predicted,
        },
        shift_threshold: a.threshold,
        max_steps: a.max_steps,
        sample_actions: a.sample,
        seed: ctx.seed,
    };
    let mut out = Vec::with_capacity(episodes.len());
    for ep in &episodes {
        let graph = ctx.graph(&ep.scan)?;
        let r = rollout(ep, graph, &params, &checkpoint.vocab, &features, &config)
            .with_context(|| format!("rolling out {}", ep.path_id))?;
        out.push(TrajectoryRecord {
            path_id: r.path_id,
            trajectory: r.trajectory,
            shifts: r.shift_events.iter().map(ShiftRecord::from_event).collect(),
        });
    }
    ctx.emit(&json(&out)?)?;
    Ok(true)
}

fn train(ctx: &mut Context, a: &TrainToyArgs) -> anyhow::Result<bool> {
    let world_config = ToyWorldConfig {
        n_nodes: a.nodes,
        n_episodes: a.episodes_per_world,
        ..Default::default()
    };
    let worlds = toy_worlds(&world_config, a.worlds, ctx.seed)?;
    let vocab = toy_vocab();
    let features = SyntheticFeatures::default();
    let mut params = ModelParams::<f64>::init(toy_model_config(&vocab, &features), ctx.seed);
    let config = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        clip_norm: a.clip,
        holdout_fraction: a.holdout,
        eval_every: a.eval_every,
        seed: ctx.seed,
        ..Default::default()
    };
    let report = train_toy(&worlds, &mut params, &vocab, &features, &config)?;
    if ctx.out.is_some() {
        ctx.emit(&json(&Checkpoint::from_params(&params, &vocab))?)?;
    }
    let text = match ctx.format {
        Format::Structured => json(&report)?,
        Format::Tsv => {
            let mut s = String::from("epoch\tloss\taction_loss\tshift_loss\theldout_f1\n");
            for e in &report.curve {
                let _ = writeln!(
                    s,
                    "{}\t{:.4}\t{:.4}\t{:.4}\t{}",
                    e.epoch,
                    e.mean_loss,
                    e.mean_action_loss,
                    e.mean_shift_loss,
                    e.heldout.map_or_else(|| "-".to_string(), |_| rate(e.heldout_f1))
                );
            }
            let _ = writeln!(s, "# final/first loss\t{:.4}", report.final_loss() / report.first_loss());
            let _ = writeln!(s, "# held-out shift f1\t{:.3}", report.final_f1());
            let _ = writeln!(s, "# majority baseline f1\t{:.3}", report.baseline_f1);
            s
        }
    };
    ctx.report(&text)?;
    Ok(true)
}

fn gradcheck(ctx: &mut Context, a: &GradcheckArgs) -> anyhow::Result<bool> {
    let config = ModelConfig::gradcheck();
    let params = ModelParams::<f64>::init(config, ctx.seed);
    let bundle = GradCheckBundle::synthetic(config, ctx.seed);
    let report = grad_check(&params, &bundle, a.eps)?;
    let ok = report.passes(a.tol);
    let text = match ctx.format {
        Format::Structured => json(&serde_json::json!({
            "loss": report.loss,
            "groups": report.groups.iter().map(|g| serde_json::json!({
                "name": g.name,
                "max_rel_error": g.max_rel_error,
                "max_small_abs_error": g.max_small_abs_error,
            })).collect::<Vec<_>>(),
            "passed": ok,
        }))?,
        Format::Tsv => {
            let mut s = String::from("group\tmax_rel_error\tmax_small_abs_error\n");
            for g in &report.groups {
                let _ = writeln!(s, "{}\t{:.3e}\t{:.3e}", g.name, g.max_rel_error, g.max_small_abs_error);
            }
            let _ = writeln!(s, "{}", if ok { "PASS" } else { "FAIL" });
            s
        }
    };
    ctx.emit(&text)?;
    Ok(ok)
}

fn gen_toy(ctx: &mut Context, a: &GenToyArgs) -> anyhow::Result<bool> {
    let dir = ctx
        .out
        .clone()
        .ok_or_else(|| anyhow!("gen-toy writes a directory; pass --out DIR"))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let config = ToyWorldConfig {
        n_nodes: a.nodes,
        n_episodes: a.episodes_per_world,
        ..Default::default()
    };
    let worlds = toy_worlds(&config, a.worlds, ctx.seed)?;
    let mut episodes = Vec::new();
    for w in &worlds {
        let path = dir.join(format!("{}.json", w.graph.scan));
        fs::write(&path, w.graph.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
        episodes.extend(w.episodes.iter().cloned());
    }
    let path = dir.join("episodes.json");
    fs::write(&path, episodes_to_json(&episodes) + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    if !ctx.quiet {
        eprintln!("wrote {} worlds and {} episodes to {}", worlds.len(), episodes.len(), dir.display());
    }
    Ok(true)
}

fn plot(ctx: &mut Context, a: &PlotArgs) -> anyhow::Result<bool> {
    let episodes = load_episode_file(ctx, &a.episodes, a.fgr2r)?;
    let ep = episodes
        .into_iter()
        .find(|e| e.path_id == a.episode)
        .ok_or_else(|| anyhow!("no episode {}", a.episode))?;
    let (trajectory, events) = match &a.trajectories {
        Some(path) => {
            let r = load_trajectories(ctx, path)?
                .into_iter()
                .find(|r| r.path_id == ep.path_id)
                .ok_or_else(|| anyhow!("no trajectory for {}", ep.path_id))?;
            let events = r
                .shifts
                .iter()
                .map(|s| s.to_event(&r.path_id))
                .collect::<anyhow::Result<Vec<_>>>()?;
            (r.trajectory, events)
        }
        None => (ep.path.clone(), Vec::new()),
    };
    let graph = ctx.graph(&ep.scan)?;
    let svg = plot_trajectory(graph, &ep, &trajectory, &events)?;
    ctx.emit(&svg)?;
    Ok(true)
}

fn r4r(ctx: &mut Context, a: &R4rArgs) -> anyhow::Result<bool> {
    let episodes = load_episode_file(ctx, &a.episodes, a.fgr2r)?;
    let mut out = Vec::new();
    'outer: for first in &episodes {
        for second in &episodes {
            if first.path_id == second.path_id || first.scan != second.scan {
                continue;
            }
            if a.max_pairs.is_some_and(|m| out.len() >= m) {
                break 'outer;
            }
            let graph = ctx.graph(&first.scan)?;
            if let Ok(ep) = concat_to_r4r(first, second, graph) {
                out.push(ep);
            }
        }
    }
    let text = match ctx.format {
        Format::Structured => episodes_to_json(&out) + "\n",
        Format::Tsv => {
            let mut s = String::from("path_id\tviewpoints\tsub_instructions\n");
            for ep in &out {
                let _ = writeln!(s, "{}\t{}\t{}", ep.path_id, ep.path.len(), ep.sub_instructions.len());
            }
            s
        }
    };
    ctx.emit(&text)?;
    Ok(true)
}
