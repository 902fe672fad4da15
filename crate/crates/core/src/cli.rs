//! The `finegrain` command line.
//!
//! Settings resolve as: command-line flag, then `--set key=value`, then
//! `FINEGRAIN_*` environment variables, then the `--config` file, then
//! built-in defaults. The effective values are recorded in the run manifest
//! written next to every output.
//!
//! Failures print one JSON line to stderr, `{"error":<kind>,"message":<text>}`,
//! and exit with status 1. Usage errors exit with status 2.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use toml::Value;

use crate::config::{KeyValues, ENV_PREFIX};
use crate::dataset::{
    binarize_with, generate_synthetic, load_dataset, read_feedback, resolve_thresholds, split_by_prompt, write_dataset,
    write_feedback, Dataset, FeedbackMap, Split, SyntheticSpec, ThresholdPolicy,
};
use crate::error::{Error, Result};
use crate::eval::{
    annotation_cost, emit_report, roc_auc, run_sweep_with_jobs, CostModel, ReportFormat, SweepSpec,
};
use crate::fsutil::{read_to_string, write_atomic};
use crate::manifest::RunManifest;
use crate::model::{coarse_labels_of, load_model, save_model, train_cbm, train_coarse, MlpConfig, ModelKind, OptimizerKind};
use crate::oracles::{
    alignment_attribute_scores, attribute_agreement_matrix, categorize_with, read_question_scores, AlignmentCategory,
    Lexicon,
};
use crate::sxs::{
    build_annotation_plan, default_tasks, ingest_sxs, read_plan, read_sxs_log, report_to_string, select_disagreement_pairs,
    write_plan, AnnotationService, CandidatePool, DisagreementMode,
};
use crate::targets::{attach_tree_labels, DecisionTree};

#[derive(Debug, Parser)]
#[command(name = "finegrain", version, about = "Reward models from coarse and fine-grained feedback")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set split.seed=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw dataset file and write it in canonical form.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset and its binary attribute labels.
    Synth(SynthArgs),
    /// Assign prompts to train/val/test.
    Split(SplitArgs),
    /// Threshold raw scores into binary feedback.
    Binarize(BinarizeArgs),
    /// Train the single-head coarse model.
    TrainCoarse(TrainCoarseArgs),
    /// Train a concept-bottleneck model on selected attributes.
    TrainCbm(TrainCbmArgs),
    /// Score a dataset with a trained model.
    Score(ScoreArgs),
    /// Learning-curve sweep over training sizes, attribute sets and seeds.
    Sweep(SweepArgs),
    /// Annotation cost of a training set.
    CostReport(CostReportArgs),
    /// Replace coarse labels with the output of a decision tree.
    TreeLabel(TreeLabelArgs),
    /// Pick prompts where two reward models disagree and build an annotation plan.
    SelectPairs(SelectPairsArgs),
    /// Serve side-by-side annotation over HTTP.
    ServeAnnotation(ServeArgs),
    /// Summarise a side-by-side response log.
    SxsReport(SxsReportArgs),
    /// Print the aggregator weights of a CBM.
    InspectAggregator(InspectArgs),
    /// Pairwise agreement between binary attribute labels.
    AgreementMatrix(AgreementArgs),
    /// Assign alignment questions to categories.
    CategorizeQuestions(CategorizeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Question-score file; adds one `align_<category>` attribute per category.
    #[arg(long)]
    pub question_scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub feedback_out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub attributes: Option<usize>,
    /// Comma-separated attribute names.
    #[arg(long, value_delimiter = ',')]
    pub names: Option<Vec<String>>,
    /// Marginal probability shared by every attribute.
    #[arg(long)]
    pub marginal: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub images_per_prompt: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Train, val and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BinarizeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Use train-split medians even when thresholds are configured.
    #[arg(long)]
    pub median: bool,
}

#[derive(Debug, Args, Default)]
pub struct MlpArgs {
    /// Hidden layer widths, e.g. `256,256`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `adam` or `sgd`.
    #[arg(long)]
    pub optimizer: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainCoarseArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub feedback: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub mlp: MlpArgs,
}

#[derive(Debug, Args)]
pub struct TrainCbmArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub feedback: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Attributes for the bottleneck; defaults to all attributes in the feedback file.
    #[arg(long, value_delimiter = ',')]
    pub attributes: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub mlp: MlpArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only score this split.
    #[arg(long)]
    pub split: Option<Split>,
    /// Feedback with coarse labels; prints the ROC-AUC of the scored rows.
    #[arg(long)]
    pub feedback: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub feedback: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `csv` or `jsonl`.
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// `coarse`, `cbm` or both, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<ModelKind>>,
    /// `name=attr1,attr2,...`. Repeatable.
    #[arg(long = "attribute-set")]
    pub attribute_sets: Vec<String>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub mlp: MlpArgs,
}

#[derive(Debug, Args)]
pub struct CostReportArgs {
    /// Number of training examples.
    #[arg(long)]
    pub n: usize,
    /// CBM attributes; without them only the coarse cost is printed.
    #[arg(long, value_delimiter = ',')]
    pub attributes: Option<Vec<String>>,
    /// Count the coarse label in CBM cost (overrides `cost.include_coarse`).
    #[arg(long)]
    pub include_coarse: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TreeLabelArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub feedback: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Tree file; defaults to the built-in tree.
    #[arg(long)]
    pub tree: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectPairsArgs {
    /// Candidate pool (dataset file).
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub model_a: PathBuf,
    #[arg(long)]
    pub model_b: PathBuf,
    /// Plan output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 194)]
    pub k: usize,
    /// `dual-argmax` or `item-delta`.
    #[arg(long, default_value = "dual-argmax")]
    pub mode: DisagreementMode,
    #[arg(long, default_value_t = 3)]
    pub raters: usize,
    /// Comma-separated tasks; defaults to aggregate plus eight attributes.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Response log; created if missing, resumed if present.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Directory of UI assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SxsReportArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Also write the weights as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub feedback: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub attributes: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct CategorizeArgs {
    /// Question-score file, or plain text with one question per line (`--plain`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plain: bool,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

/// Effective settings: flag, then config, then default. Every resolved value
/// is written back so the manifest shows what was used.
struct Settings {
    kv: KeyValues,
    args: Vec<String>,
}

impl Settings {
    fn load(cli: &Cli, args: Vec<String>) -> Result<Self> {
        let mut kv = match &cli.config {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::default(),
        };
        kv.apply_env(ENV_PREFIX, std::env::vars());
        for o in &cli.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got `{o}`")))?;
            kv.set_raw(k.trim(), v.trim());
        }
        Ok(Self { kv, args })
    }

    fn resolve<T, G>(&mut self, key: &str, flag: Option<T>, default: T, get: G) -> Result<T>
    where
        T: Clone + Into<Value>,
        G: Fn(&KeyValues, &str) -> Result<Option<T>>,
    {
        let v = match flag {
            Some(v) => v,
            None => get(&self.kv, key)?.unwrap_or(default),
        };
        self.kv.set(key, v.clone().into());
        Ok(v)
    }

    fn f64(&mut self, key: &str, flag: Option<f64>, default: f64) -> Result<f64> {
        self.resolve(key, flag, default, |kv, k| kv.get_f64(k))
    }

    fn u64(&mut self, key: &str, flag: Option<u64>, default: u64) -> Result<u64> {
        let v = match flag {
            Some(v) => v,
            None => self.kv.get_u64(key)?.unwrap_or(default),
        };
        self.kv.set(key, Value::Integer(v as i64));
        Ok(v)
    }

    fn usize(&mut self, key: &str, flag: Option<usize>, default: usize) -> Result<usize> {
        Ok(self.u64(key, flag.map(|v| v as u64), default as u64)? as usize)
    }

    fn usizes(&mut self, key: &str, flag: Option<Vec<usize>>, default: Vec<usize>) -> Result<Vec<usize>> {
        let v = match flag {
            Some(v) => v,
            None => self
                .kv
                .get_u64_list(key)?
                .map(|l| l.into_iter().map(|x| x as usize).collect())
                .unwrap_or(default),
        };
        self.kv.set(key, Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect()));
        Ok(v)
    }

    fn strings(&mut self, key: &str, flag: Option<Vec<String>>, default: Vec<String>) -> Result<Vec<String>> {
        self.resolve(key, flag, default, |kv, k| kv.get_str_list(k))
    }

    fn mlp(&mut self, args: &MlpArgs, seed: u64) -> Result<MlpConfig> {
        let base = MlpConfig::new(1, 1);
        let optimizer = match self.strings("mlp.optimizer", args.optimizer.clone().map(|o| vec![o]), vec!["adam".into()])?
            .first()
            .map(String::as_str)
        {
            Some("adam") => OptimizerKind::Adam,
            Some("sgd") => OptimizerKind::Sgd,
            other => return Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        };
        let cfg = MlpConfig {
            hidden_dims: self.usizes("mlp.hidden_dims", args.hidden.clone(), base.hidden_dims.clone())?,
            learning_rate: self.f64("mlp.learning_rate", args.learning_rate, base.learning_rate)?,
            epochs: self.usize("mlp.epochs", args.epochs, base.epochs)?,
            batch_size: self.usize("mlp.batch_size", args.batch_size, base.batch_size)?,
            seed,
            optimizer,
            ..base
        };
        Ok(cfg)
    }
}

fn manifest(command: &str, settings: &Settings) -> RunManifest {
    let mut m = RunManifest::begin(command, settings.args.clone());
    m.config(&settings.kv);
    m
}

fn finish(m: &mut RunManifest, settings: &Settings, outputs: &[&Path]) -> Result<()> {
    m.config(&settings.kv);
    m.finish(outputs)
}

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

fn feedback_names(feedback: &FeedbackMap) -> Vec<String> {
    feedback
        .values()
        .next()
        .map(|fv| fv.attribute_labels.keys().cloned().collect())
        .unwrap_or_default()
}

fn cmd_ingest(a: &IngestArgs, s: &mut Settings) -> Result<()> {
    let mut m = manifest("ingest", s);
    m.input(&a.input)?;
    let mut ds = load_dataset(&a.input)?;
    if let Some(q) = &a.question_scores {
        m.input(q)?;
        let scores = alignment_attribute_scores(&read_question_scores(q)?)?;
        for c in AlignmentCategory::ALL {
            let name = c.attribute_name();
            if ds.attribute_names.contains(&name) {
                return Err(Error::invalid(format!("dataset already has attribute `{name}`")));
            }
            ds.attribute_names.push(name);
        }
        for ex in &mut ds.examples {
            for c in AlignmentCategory::ALL {
                let v = scores.get(&ex.example_id).map(|s| s[&c.attribute_name()]).unwrap_or(1.0);
                ex.raw_attribute_scores.insert(c.attribute_name(), v);
            }
        }
    }
    ds.validate()?;
    write_dataset(&ds, &a.out)?;
    eprintln!("ingested {} examples, {} prompts", ds.examples.len(), ds.prompt_ids().len());
    finish(&mut m, s, &[&a.out])
}

fn cmd_synth(a: &SynthArgs, s: &mut Settings) -> Result<()> {
    let n = s.usize("synthetic.n", a.n, 2000)?;
    let dim = s.usize("synthetic.dim", a.dim, 16)?;
    let names = match &a.names {
        Some(v) => Some(v.clone()),
        None => s.kv.get_str_list("synthetic.attributes")?,
    };
    let m_default = names.as_ref().map(Vec::len).unwrap_or(9);
    let m_attr = s.usize("synthetic.n_attributes", a.attributes, m_default)?;
    let marginal = s.f64("synthetic.marginal", a.marginal, 0.5)?;
    let sigma = s.f64("synthetic.noise_sigma", a.noise_sigma, 1.0)?;
    let ipp = s.usize("synthetic.images_per_prompt", a.images_per_prompt, 4)?;
    let seed = s.u64("synthetic.seed", a.seed, 0)?;
    if let Some(n) = &names {
        s.kv.set("synthetic.attributes", Value::Array(n.iter().cloned().map(Value::String).collect()));
    }
    let marginals = s.kv.get_f64_list("synthetic.marginals")?.unwrap_or_else(|| vec![marginal; m_attr]);
    let spec = SyntheticSpec {
        n_examples: n,
        embedding_dim: dim,
        n_attributes: m_attr,
        attribute_marginals: marginals,
        noise_sigma: sigma,
        seed,
        attribute_names: names,
        images_per_prompt: ipp,
    };
    let mut m = manifest("synth", s);
    m.seed(seed);
    let (ds, fb) = generate_synthetic(&spec)?;
    write_dataset(&ds, &a.out)?;
    write_feedback(&ds.attribute_names, &fb, &a.feedback_out)?;
    finish(&mut m, s, &[&a.out, &a.feedback_out])
}

fn cmd_split(a: &SplitArgs, s: &mut Settings) -> Result<()> {
    let fr = match &a.fractions {
        Some(f) => f.clone(),
        None => s.kv.get_f64_list("split.fractions")?.unwrap_or_else(|| vec![0.5, 0.25, 0.25]),
    };
    if fr.len() != 3 {
        return Err(Error::invalid("split.fractions needs three values"));
    }
    s.kv.set("split.fractions", Value::Array(fr.iter().map(|&x| Value::Float(x)).collect()));
    let seed = s.u64("split.seed", a.seed, 0)?;
    let mut m = manifest("split", s);
    m.seed(seed).input(&a.dataset)?;
    let ds = split_by_prompt(&load_dataset(&a.dataset)?, (fr[0], fr[1], fr[2]), seed)?;
    write_dataset(&ds, &a.out)?;
    for sp in [Split::Train, Split::Val, Split::Test] {
        eprintln!("{sp}: {} examples", ds.examples_in(sp).len());
    }
    finish(&mut m, s, &[&a.out])
}

fn cmd_binarize(a: &BinarizeArgs, s: &mut Settings) -> Result<()> {
    let mut m = manifest("binarize", s);
    m.input(&a.dataset)?;
    let ds = load_dataset(&a.dataset)?;
    let configured = s.kv.thresholds()?;
    let policy = match (a.median, configured) {
        (false, Some(t)) => ThresholdPolicy::Explicit(t),
        (false, None) if !ds.thresholds.attributes.is_empty() => ThresholdPolicy::Explicit(ds.thresholds.clone()),
        _ => ThresholdPolicy::TrainMedian,
    };
    let t = resolve_thresholds(&ds, &policy)?;
    for (k, v) in &t.attributes {
        s.kv.set(&format!("threshold.{k}"), Value::Float(*v));
    }
    if let Some(c) = t.coarse {
        s.kv.set("coarse.threshold", Value::Float(c));
    }
    let fb = binarize_with(&ds, &t)?;
    write_feedback(&ds.attribute_names, &fb, &a.out)?;
    finish(&mut m, s, &[&a.out])
}

fn load_labelled(dataset: &Path, feedback: &Path, m: &mut RunManifest) -> Result<(Dataset, FeedbackMap)> {
    m.input(dataset)?.input(feedback)?;
    let ds = load_dataset(dataset)?;
    let (_, fb) = read_feedback(feedback)?;
    Ok((ds, fb))
}

fn cmd_train_coarse(a: &TrainCoarseArgs, s: &mut Settings) -> Result<()> {
    let seed = s.u64("mlp.seed", a.seed, 0)?;
    let cfg = s.mlp(&a.mlp, seed)?;
    let mut m = manifest("train-coarse", s);
    m.seed(seed);
    let (ds, fb) = load_labelled(&a.dataset, &a.feedback, &mut m)?;
    let model = train_coarse(&ds, &coarse_labels_of(&fb), &cfg)?;
    save_model(&model, &a.out)?;
    finish(&mut m, s, &[&a.out])
}

fn cmd_train_cbm(a: &TrainCbmArgs, s: &mut Settings) -> Result<()> {
    let seed = s.u64("mlp.seed", a.seed, 0)?;
    let cfg = s.mlp(&a.mlp, seed)?;
    let mut m = manifest("train-cbm", s);
    m.seed(seed);
    let (ds, fb) = load_labelled(&a.dataset, &a.feedback, &mut m)?;
    let attrs = s.strings("cbm.attributes", a.attributes.clone(), feedback_names(&fb))?;
    let model = train_cbm(&ds, &fb, &attrs, &cfg)?;
    save_model(&model, &a.out)?;
    finish(&mut m, s, &[&a.out])
}

fn cmd_score(a: &ScoreArgs, s: &mut Settings) -> Result<()> {
    let mut m = manifest("score", s);
    m.input(&a.model)?.input(&a.dataset)?;
    let model = load_model(&a.model)?;
    let ds = load_dataset(&a.dataset)?;
    let rows: Vec<_> = match a.split {
        Some(sp) => ds.examples_in(sp),
        None => ds.examples.iter().collect(),
    };
    let inputs: Vec<Vec<f64>> = rows.iter().map(|e| e.features()).collect();
    let scores = model.score_many(&inputs)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .zip(&scores)
        .map(|(e, sc)| {
            vec![
                e.example_id.clone(),
                e.prompt_id.clone(),
                ds.split_of(e).map(|s| s.to_string()).unwrap_or_default(),
                sc.to_string(),
            ]
        })
        .collect();
    if let Some(fp) = &a.feedback {
        m.input(fp)?;
        let (_, fb) = read_feedback(fp)?;
        let labels = coarse_labels_of(&fb);
        let y: Vec<bool> = rows
            .iter()
            .map(|e| labels.get(&e.example_id).copied().ok_or_else(|| Error::MissingExample(e.example_id.clone())))
            .collect::<Result<_>>()?;
        println!("auc={}", roc_auc(&scores, &y)?);
    }
    write_csv_rows(&a.out, &["example_id", "prompt_id", "split", "score"], &table)?;
    finish(&mut m, s, &[&a.out])
}

fn parse_attribute_set(spec: &str) -> Result<(String, Vec<String>)> {
    let (name, attrs) = spec
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("--attribute-set expects name=a,b,c, got `{spec}`")))?;
    let attrs: Vec<String> = attrs.split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect();
    Ok((name.trim().to_string(), attrs))
}

fn cmd_sweep(a: &SweepArgs, s: &mut Settings) -> Result<()> {
    let mut m = manifest("sweep", s);
    let (ds, fb) = load_labelled(&a.dataset, &a.feedback, &mut m)?;
    let sizes = s.usizes("sweep.train_sizes", a.sizes.clone(), vec![100, 250, 500, 1000])?;
    let seeds: Vec<u64> = match &a.seeds {
        Some(v) => v.clone(),
        None => s.kv.get_u64_list("sweep.seeds")?.unwrap_or_else(|| (0..5).collect()),
    };
    s.kv.set("sweep.seeds", Value::Array(seeds.iter().map(|&x| Value::Integer(x as i64)).collect()));
    let kind_names = s.strings(
        "sweep.model_kinds",
        a.kinds.as_ref().map(|k| k.iter().map(|k| k.to_string()).collect()),
        vec!["coarse".into(), "cbm".into()],
    )?;
    let kinds = kind_names.iter().map(|k| k.parse()).collect::<Result<Vec<ModelKind>>>()?;
    let mut sets: Vec<(String, Vec<String>)> = Vec::new();
    if a.attribute_sets.is_empty() {
        for key in s.kv.keys_with_prefix("sweep.attribute_sets.") {
            let name = key["sweep.attribute_sets.".len()..].to_string();
            sets.push((name, s.kv.get_str_list(&key)?.expect("key exists")));
        }
        if sets.is_empty() {
            sets.push(("all".into(), feedback_names(&fb)));
        }
    } else {
        for spec in &a.attribute_sets {
            sets.push(parse_attribute_set(spec)?);
        }
    }
    for (name, attrs) in &sets {
        s.kv.set(
            &format!("sweep.attribute_sets.{name}"),
            Value::Array(attrs.iter().cloned().map(Value::String).collect()),
        );
    }
    let seed = s.u64("mlp.seed", None, 0)?;
    let cfg = s.mlp(&a.mlp, seed)?;
    let mut cost = CostModel::from_key_values(&s.kv)?;
    for name in ds.attribute_names.iter().chain(feedback_names(&fb).iter()) {
        cost.attribute_costs.entry(name.clone()).or_insert(1.0);
    }
    for &sd in &seeds {
        m.seed(sd);
    }
    let spec = SweepSpec { train_sizes: sizes, attribute_sets: sets, seeds, model_kinds: kinds };
    let outcome = run_sweep_with_jobs(&ds, &fb, &coarse_labels_of(&fb), &spec, &cost, &cfg, a.jobs.max(1))?;
    emit_report(&outcome.points, a.format, &a.out)?;
    let mut outputs: Vec<PathBuf> = vec![a.out.clone()];
    if !outcome.failures.is_empty() {
        let err_path = PathBuf::from(format!("{}.errors.csv", a.out.display()));
        let rows: Vec<Vec<String>> = outcome
            .failures
            .iter()
            .map(|f| vec![f.model_name.clone(), f.n_train.to_string(), f.seed.to_string(), f.error.clone()])
            .collect();
        write_csv_rows(&err_path, &["model_name", "n_train", "seed", "error"], &rows)?;
        eprintln!("{} sweep cells failed; see {}", outcome.failures.len(), err_path.display());
        outputs.push(err_path);
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    finish(&mut m, s, &refs)
}

fn cmd_cost_report(a: &CostReportArgs, s: &mut Settings) -> Result<()> {
    if let Some(b) = a.include_coarse {
        s.kv.set("cost.include_coarse", Value::Boolean(b));
    }
    let mut cost = CostModel::from_key_values(&s.kv)?;
    println!("kind,n,cost");
    println!("coarse,{},{}", a.n, annotation_cost(&cost, a.n, &[] as &[&str], ModelKind::Coarse)?);
    if let Some(attrs) = &a.attributes {
        if s.kv.keys_with_prefix("cost.attr.").is_empty() {
            for name in attrs {
                cost.attribute_costs.insert(name.clone(), 1.0);
            }
        }
        println!("cbm,{},{}", a.n, annotation_cost(&cost, a.n, attrs, ModelKind::Cbm)?);
    }
    Ok(())
}

fn cmd_tree_label(a: &TreeLabelArgs, s: &mut Settings) -> Result<()> {
    let mut m = manifest("tree-label", s);
    let (ds, fb) = load_labelled(&a.dataset, &a.feedback, &mut m)?;
    let tree = match &a.tree {
        Some(p) => {
            m.input(p)?;
            DecisionTree::parse(&read_to_string(p)?)?
        }
        None => DecisionTree::default_tree(),
    };
    let names = feedback_names(&fb);
    tree.check_attributes(&names)?;
    let labelled = attach_tree_labels(&ds, &tree, &fb)?;
    let positives = labelled.values().filter(|f| f.coarse_label == Some(true)).count();
    eprintln!("tree: {tree}\n{positives} of {} examples labelled good", labelled.len());
    write_feedback(&names, &labelled, &a.out)?;
    finish(&mut m, s, &[&a.out])
}

fn cmd_select_pairs(a: &SelectPairsArgs, s: &mut Settings) -> Result<()> {
    let seed = s.u64("sxs.seed", a.seed, 0)?;
    let tasks = s.strings("sxs.tasks", a.tasks.clone(), default_tasks())?;
    let mut m = manifest("select-pairs", s);
    m.seed(seed).input(&a.pool)?.input(&a.model_a)?.input(&a.model_b)?;
    let pool = CandidatePool::from_dataset(&load_dataset(&a.pool)?, &a.pool.display().to_string());
    let sel = select_disagreement_pairs(&pool, &load_model(&a.model_a)?, &load_model(&a.model_b)?, a.k, a.mode)?;
    if sel.shortfall > 0 {
        eprintln!("warning: {} eligible pairs, {} fewer than k={}", sel.pairs.len(), sel.shortfall, a.k);
    }
    let mut plan = build_annotation_plan(&sel.pairs, &tasks, a.raters, seed)?;
    plan.attach_media(&pool)?;
    write_plan(&plan, &a.out)?;
    eprintln!("{} pairs, {} assignments", plan.pairs.len(), plan.assignments.len());
    finish(&mut m, s, &[&a.out])
}

fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let plan = read_plan(&a.plan)?;
    let svc = AnnotationService::open(plan, &a.log)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.bind).await.map_err(|e| Error::io(&a.bind, e))?;
        eprintln!("serving on http://{}", listener.local_addr().map_err(|e| Error::io(&a.bind, e))?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        svc.serve(listener, a.static_dir.clone(), shutdown).await
    })
}

fn cmd_sxs_report(a: &SxsReportArgs, s: &mut Settings) -> Result<()> {
    let mut m = manifest("sxs-report", s);
    m.input(&a.plan)?.input(&a.log)?;
    let report = ingest_sxs(&read_sxs_log(&a.log)?, &read_plan(&a.plan)?)?;
    print!("{}", report.to_table());
    write_atomic(&a.out, report_to_string(&report)?.as_bytes())?;
    finish(&mut m, s, &[&a.out])
}

fn cmd_inspect(a: &InspectArgs, s: &mut Settings) -> Result<()> {
    let report = load_model(&a.model)?.inspect_aggregator()?;
    for (name, w) in &report.weights {
        println!("{name:<28}{w:>12.6}");
    }
    println!("{:<28}{:>12.6}", "(bias)", report.bias);
    if let Some(out) = &a.out {
        let mut m = manifest("inspect-aggregator", s);
        m.input(&a.model)?;
        write_atomic(out, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
        finish(&mut m, s, &[out])?;
    }
    Ok(())
}

fn cmd_agreement(a: &AgreementArgs, s: &mut Settings) -> Result<()> {
    let mut m = manifest("agreement-matrix", s);
    m.input(&a.feedback)?;
    let (names, fb) = read_feedback(&a.feedback)?;
    let attrs = a.attributes.clone().unwrap_or(names);
    let mat = attribute_agreement_matrix(&fb, &attrs)?;
    let mut header = vec!["attribute"];
    header.extend(attrs.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = attrs
        .iter()
        .zip(&mat)
        .map(|(n, row)| std::iter::once(n.clone()).chain(row.iter().map(|v| v.to_string())).collect())
        .collect();
    write_csv_rows(&a.out, &header, &rows)?;
    finish(&mut m, s, &[&a.out])
}

fn cmd_categorize(a: &CategorizeArgs, s: &mut Settings) -> Result<()> {
    let mut m = manifest("categorize-questions", s);
    m.input(&a.input)?;
    let lexicon = match &a.lexicon {
        Some(p) => {
            m.input(p)?;
            Lexicon::load(p)?
        }
        None => Lexicon::bundled(),
    };
    let questions: Vec<(String, String)> = if a.plain {
        read_to_string(&a.input)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| (String::new(), l.to_string()))
            .collect()
    } else {
        read_question_scores(&a.input)?
            .into_iter()
            .flat_map(|(id, qs)| qs.into_iter().map(move |q| (id.clone(), q.question_text)))
            .collect()
    };
    let mut counts: BTreeMap<AlignmentCategory, usize> = BTreeMap::new();
    let rows: Vec<Vec<String>> = questions
        .into_iter()
        .map(|(id, q)| {
            let c = categorize_with(&q, &lexicon);
            *counts.entry(c).or_default() += 1;
            vec![id, q, c.to_string()]
        })
        .collect();
    for (c, n) in counts {
        eprintln!("{c}: {n}");
    }
    write_csv_rows(&a.out, &["example_id", "question_text", "category"], &rows)?;
    finish(&mut m, s, &[&a.out])
}

fn dispatch(cli: &Cli, args: Vec<String>) -> Result<()> {
    let mut s = Settings::load(cli, args)?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, &mut s),
        Command::Synth(a) => cmd_synth(a, &mut s),
        Command::Split(a) => cmd_split(a, &mut s),
        Command::Binarize(a) => cmd_binarize(a, &mut s),
        Command::TrainCoarse(a) => cmd_train_coarse(a, &mut s),
        Command::TrainCbm(a) => cmd_train_cbm(a, &mut s),
        Command::Score(a) => cmd_score(a, &mut s),
        Command::Sweep(a) => cmd_sweep(a, &mut s),
        Command::CostReport(a) => cmd_cost_report(a, &mut s),
        Command::TreeLabel(a) => cmd_tree_label(a, &mut s),
        Command::SelectPairs(a) => cmd_select_pairs(a, &mut s),
        Command::ServeAnnotation(a) => cmd_serve(a),
        Command::SxsReport(a) => cmd_sxs_report(a, &mut s),
        Command::InspectAggregator(a) => cmd_inspect(a, &mut s),
        Command::AgreementMatrix(a) => cmd_agreement(a, &mut s),
        Command::CategorizeQuestions(a) => cmd_categorize(a, &mut s),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let recorded = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            1
        }
    }
}
