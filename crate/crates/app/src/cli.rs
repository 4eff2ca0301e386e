//! Command-line front end. Every command returns the text it wants on
//! standard output so `replay` can hash it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use npti::corpus::{load_corpus, render_question, Instance, PromptTemplate, Trait, TraitCorpus};
use npti::decoding::{greedy_decode, GenerationParams};
use npti::identifier::{identify, layer_histogram, value_histogram, IdentifierConfig, NeuronClass, NeuronMap};
use npti::model::{Activation, ModelConfig, NeuronId, ToyModel};
use npti::profiler::{profile_report, ProfileOptions, ProfileReport, DEFAULT_RESERVOIR_CAPACITY};
use npti::steering::{alignment_spec, AlignmentTarget, Direction, SpecFile, SteeringItem, SteeringSpec, DEFAULT_GAMMA};
use npti::tokenizer::{detokenize, tokenize, VOCAB_SIZE};
use npti::weights::{load_weights, save_weights};
use npti_eval::{aggregate, judge_all, write_records, Judge, JudgeConfig, JudgeItem, JudgeMode};
use serde_json::json;

use crate::config::AppConfig;
use crate::manifest::{load_manifest, sha256_hex, Recorder, STDOUT};
use crate::registry::MapRegistry;
use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "npti", version, about = "Profile, identify and steer trait neurons in toy GLU transformers")]
pub struct Cli {
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a deterministic random toy model.
    MakeModel(MakeModelArgs),
    /// Record activation probabilities while generating over a corpus.
    Profile(ProfileArgs),
    /// Classify trait neurons from a positive and a negative profile.
    Identify(IdentifyArgs),
    /// Generate text, optionally steered by neuron maps.
    Generate(GenerateArgs),
    /// Generate answers for evaluation questions and score them.
    Eval(EvalArgs),
    /// Export layer and value histograms as CSV.
    Analyze(AnalyzeArgs),
    /// Turn per-trait target scores into a steering spec.
    Align(AlignArgs),
    /// Run the HTTP steering service.
    Serve(ServeArgs),
    /// Rerun a recorded command and check its outputs are unchanged.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct MakeModelArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 64)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 1024)]
    pub max_seq_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct GenArgs {
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long, default_value_t = npti::decoding::DEFAULT_REPETITION_PENALTY)]
    pub repetition_penalty: f32,
}

impl GenArgs {
    fn params(&self, default_max: usize) -> Result<GenerationParams> {
        let p = GenerationParams {
            max_tokens: self.max_tokens.unwrap_or(default_max),
            repetition_penalty: self.repetition_penalty,
            ..GenerationParams::default()
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Built-in template (p2, simple, plain) or a template file.
    #[arg(long, default_value = "p2")]
    pub template: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long, default_value_t = DEFAULT_RESERVOIR_CAPACITY)]
    pub reservoir: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub pos: PathBuf,
    #[arg(long)]
    pub neg: PathBuf,
    #[arg(long, default_value_t = npti::identifier::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Override the threshold for the positive class only.
    #[arg(long)]
    pub pos_threshold: Option<f64>,
    /// Override the threshold for the negative class only.
    #[arg(long)]
    pub neg_threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Neuron map to steer with; repeat for several traits.
    #[arg(long = "map")]
    pub maps: Vec<PathBuf>,
    #[arg(long, default_value = "positive")]
    pub direction: String,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Steering spec file; map references are resolved by trait letter
    /// against --map and --maps-dir.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    #[arg(long)]
    pub prompt: String,
    /// Wrap the prompt as a question in the neutral answer template.
    #[arg(long)]
    pub neutral: bool,
    #[command(flatten)]
    pub gen: GenArgs,
    /// Use maps built from a different model.
    #[arg(long)]
    pub force: bool,
    /// Print a JSON object instead of plain text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMethod {
    /// Neutral prompt with neuron steering towards the file's aspect.
    Npti,
    /// Adjective prompt describing the aspect, no steering.
    Prompt,
    /// Neutral prompt, no steering.
    None,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "map")]
    pub maps: Vec<PathBuf>,
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    /// Evaluation corpus files (question lists per trait and aspect).
    #[arg(long = "questions", required = true)]
    pub questions: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = EvalMethod::Npti)]
    pub method: EvalMethod,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// mock (offline lexicon) or remote (JUDGE_* environment variables).
    #[arg(long, default_value = "mock")]
    pub judge: String,
    /// Config file whose [judge] section overrides --judge.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-trait summary JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// Per-layer neuron counts CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a value histogram for this neuron (layer:index).
    #[arg(long, requires_all = ["model", "corpus", "values_out"])]
    pub neuron: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "p2")]
    pub template: String,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub values_out: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenArgs,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long = "map")]
    pub maps: Vec<PathBuf>,
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    /// Target scores as `O=4.5,E=2` or a JSON object file.
    #[arg(long)]
    pub targets: String,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma_base: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long = "map")]
    pub maps: Vec<PathBuf>,
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest_file: PathBuf,
}

/// Parses `argv` (without the program name) and runs the command. Returns
/// the process exit code: 0 success, 1 runtime error, 2 usage error.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(std::iter::once("npti".to_string()).chain(argv.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli, &argv) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run(cli: Cli, argv: &[String]) -> Result<String> {
    let manifest = cli.manifest.as_deref();
    match cli.command {
        Command::MakeModel(a) => make_model(a, argv, manifest),
        Command::Profile(a) => profile(a, argv, manifest),
        Command::Identify(a) => identify_cmd(a, argv, manifest),
        Command::Generate(a) => generate(a, argv, manifest),
        Command::Eval(a) => eval(a, argv, manifest),
        Command::Analyze(a) => analyze(a, argv, manifest),
        Command::Align(a) => align(a, argv, manifest),
        Command::Serve(a) => serve(a, argv, manifest),
        Command::Replay(a) => replay(a),
    }
}

/// Creates the parent directory of an output file if needed.
fn out_path(path: &Path) -> Result<&Path> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(path)
}

fn load_model(path: &Path, rec: &mut Recorder) -> Result<ToyModel> {
    rec.input(path)?;
    load_weights(path).with_context(|| format!("loading model {}", path.display()))
}

fn make_model(a: MakeModelArgs, argv: &[String], manifest: Option<&Path>) -> Result<String> {
    let mut rec = Recorder::start("make-model", argv);
    let config = ModelConfig {
        n_layers: a.layers,
        d_model: a.d_model,
        d_ff: a.d_ff,
        n_heads: a.heads,
        vocab_size: VOCAB_SIZE,
        max_seq_len: a.max_seq_len,
        activation: Activation::Silu,
    };
    let model = ToyModel::new_random(config, a.seed)?;
    save_weights(&model, out_path(&a.out)?)?;
    rec.config(json!({ "model": config, "seed": a.seed }));
    rec.output(&a.out)?;
    rec.finish(manifest)?;
    Ok(format!("wrote {} (fingerprint {})\n", a.out.display(), model.fingerprint()))
}

/// With the short template, descriptions are replaced by the aspect's
/// adjective phrase.
fn corpus_for_template(corpus: TraitCorpus, template: &PromptTemplate) -> Result<TraitCorpus> {
    if template.name() != "simple" {
        return Ok(corpus);
    }
    let desc = corpus.trait_.simple_description(corpus.aspect);
    let instances = corpus
        .instances
        .into_iter()
        .map(|i| Instance {
            description: desc.clone(),
            ..i
        })
        .collect();
    Ok(TraitCorpus::new(corpus.trait_, corpus.aspect, instances)?)
}

fn profile(a: ProfileArgs, argv: &[String], manifest: Option<&Path>) -> Result<String> {
    let mut rec = Recorder::start("profile", argv);
    let model = load_model(&a.model, &mut rec)?;
    rec.input(&a.corpus)?;
    let template = PromptTemplate::resolve(&a.template)?;
    let corpus = corpus_for_template(load_corpus(&a.corpus)?, &template)?;
    let gen = a.gen.params(32)?;
    let opts = ProfileOptions {
        reservoir_capacity: a.reservoir,
        seed: a.seed,
    };
    let report = profile_report(&model, &corpus, &template, &gen, &opts)?;
    report.validate()?;
    report.save(out_path(&a.out)?)?;
    rec.config(json!({ "template": template.name(), "generation": gen, "options": opts }));
    rec.output(&a.out)?;
    rec.finish(manifest)?;
    let (lo, hi) = report
        .pr
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, _, p)| (lo.min(p), hi.max(p)));
    Ok(format!(
        "profiled {} {} over {} generated tokens; Pr in [{lo:.4}, {hi:.4}]; wrote {}\n",
        report.trait_,
        report.aspect,
        report.n_tokens,
        a.out.display()
    ))
}

fn identify_cmd(a: IdentifyArgs, argv: &[String], manifest: Option<&Path>) -> Result<String> {
    let mut rec = Recorder::start("identify", argv);
    rec.input(&a.pos)?;
    rec.input(&a.neg)?;
    let pos = ProfileReport::load(&a.pos).with_context(|| format!("loading {}", a.pos.display()))?;
    let neg = ProfileReport::load(&a.neg).with_context(|| format!("loading {}", a.neg.display()))?;
    let config = IdentifierConfig {
        pos_threshold: a.pos_threshold.unwrap_or(a.threshold),
        neg_threshold: a.neg_threshold.unwrap_or(a.threshold),
    };
    config.validate()?;
    let map = identify(&pos, &neg, &config)?;
    map.validate()?;
    map.save(out_path(&a.out)?)?;
    rec.config(json!({ "identifier": config }));
    rec.output(&a.out)?;
    rec.finish(manifest)?;
    Ok(format!(
        "trait {}: {} pos, {} neg neurons; wrote {}\n",
        map.trait_,
        map.count(NeuronClass::Pos),
        map.count(NeuronClass::Neg),
        a.out.display()
    ))
}

fn load_registry(maps: &[PathBuf], dir: Option<&Path>, rec: &mut Recorder) -> Result<MapRegistry> {
    let mut reg = MapRegistry::new();
    for m in maps {
        reg.load_file(m)?;
    }
    if let Some(d) = dir {
        reg.load_dir(d)?;
    }
    for p in reg.sources().cloned().collect::<Vec<_>>() {
        rec.input(&p)?;
    }
    Ok(reg)
}

fn warn_all(warnings: Vec<String>) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn generate(a: GenerateArgs, argv: &[String], manifest: Option<&Path>) -> Result<String> {
    let mut rec = Recorder::start("generate", argv);
    let model = load_model(&a.model, &mut rec)?;
    let reg = load_registry(&a.maps, a.maps_dir.as_deref(), &mut rec)?;
    warn_all(reg.check_provenance(&model, a.force)?);

    let spec = match &a.spec {
        Some(path) => {
            rec.input(path)?;
            let file: SpecFile = serde_json::from_str(&fs::read_to_string(path)?)
                .with_context(|| format!("parsing spec {}", path.display()))?;
            file.resolve(|r| Trait::from_str(r).ok().and_then(|t| reg.get(t).cloned()))?
        }
        None => {
            let direction = Direction::from_str(&a.direction)?;
            SteeringSpec {
                items: reg
                    .iter()
                    .map(|(_, m)| SteeringItem::new(Arc::clone(m), direction, a.gamma))
                    .collect(),
                weight_fn: Default::default(),
            }
        }
    };
    let bound = spec.bind(model.config())?;
    let params = a.gen.params(64)?;
    let text = if a.neutral { render_question(&a.prompt) } else { a.prompt.clone() };
    let prompt = tokenize(&text, true);
    let overlay: Option<&dyn npti::GateOverlay> = if bound.is_identity() { None } else { Some(&bound) };
    let g = greedy_decode(&model, &prompt, &params, overlay)?;
    if g.truncated() {
        eprintln!("warning: generation stopped at the model's context limit");
    }
    let out_text = detokenize(&g.tokens)?;
    let stdout = if a.json {
        let counts: BTreeMap<Trait, _> = spec.items.iter().map(|i| (i.map.trait_, i.active_counts())).collect();
        format!(
            "{}\n",
            json!({
                "text": out_text,
                "tokens": g.tokens,
                "stop_reason": g.stop_reason,
                "steering": SpecFile::from_spec(&spec),
                "per_trait_active_neuron_counts": counts,
            })
        )
    } else {
        format!("{out_text}\n")
    };
    rec.config(json!({ "generation": params, "steering": SpecFile::from_spec(&spec), "neutral": a.neutral }));
    rec.stdout(&stdout);
    rec.finish(manifest)?;
    Ok(stdout)
}

fn judge_config(a: &EvalArgs) -> Result<JudgeConfig> {
    let mut cfg = match &a.config {
        Some(path) => match AppConfig::load(path)?.judge {
            Some(j) => j.to_judge_config(|k| std::env::var(k).ok())?,
            None => bail!("config {} has no [judge] section", path.display()),
        },
        None => match a.judge.as_str() {
            "mock" => JudgeConfig::mock(),
            "remote" => JudgeConfig::from_env()?,
            other => bail!("unknown judge {other:?} (expected mock or remote)"),
        },
    };
    if let Some(n) = a.max_in_flight {
        cfg.max_in_flight = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn eval(a: EvalArgs, argv: &[String], manifest: Option<&Path>) -> Result<String> {
    let mut rec = Recorder::start("eval", argv);
    let model = load_model(&a.model, &mut rec)?;
    let reg = load_registry(&a.maps, a.maps_dir.as_deref(), &mut rec)?;
    warn_all(reg.check_provenance(&model, a.force)?);
    let judge_cfg = judge_config(&a)?;
    let judge = Judge::new(&judge_cfg)?;
    let params = a.gen.params(64)?;

    let mut items = Vec::new();
    for path in &a.questions {
        rec.input(path)?;
        let corpus = load_corpus(path)?;
        let (t, aspect) = (corpus.trait_, corpus.aspect);
        let spec = match a.method {
            EvalMethod::Npti => {
                let map = reg
                    .get(t)
                    .ok_or_else(|| anyhow!("no neuron map for trait {t} (needed by {})", path.display()))?;
                SteeringSpec::single(Arc::clone(map), Direction::from(aspect), a.gamma)
            }
            EvalMethod::Prompt | EvalMethod::None => SteeringSpec::empty(),
        };
        let bound = spec.bind(model.config())?;
        let overlay: Option<&dyn npti::GateOverlay> = if bound.is_identity() { None } else { Some(&bound) };
        for (i, inst) in corpus.instances.iter().enumerate() {
            let prompt_text = match a.method {
                EvalMethod::Prompt => PromptTemplate::simple().render(&t.simple_description(aspect), &inst.question),
                _ => render_question(&inst.question),
            };
            let g = greedy_decode(&model, &tokenize(&prompt_text, true), &params, overlay)?;
            items.push(JudgeItem {
                question_id: format!("{}_{}_{i}", t.letter(), aspect),
                trait_: t,
                aspect,
                question: inst.question.clone(),
                answer: detokenize(&g.tokens)?,
            });
        }
    }
    // A remote judge refuses empty answers; they are reported, not scored.
    let (scorable, empty): (Vec<_>, Vec<_>) = items
        .into_iter()
        .partition(|i| judge_cfg.mode == JudgeMode::Mock || !i.answer.trim().is_empty());
    for e in &empty {
        eprintln!("warning: {} produced an empty answer and was not scored", e.question_id);
    }
    let records = judge_all(&judge, &scorable, judge_cfg.max_in_flight)?;
    write_records(out_path(&a.out)?, &records)?;
    rec.output(&a.out)?;

    let mut out = format!("scored {} answers with the {:?} judge; wrote {}\n", records.len(), judge_cfg.mode, a.out.display());
    let traits: std::collections::BTreeSet<Trait> = records.iter().map(|r| r.trait_).collect();
    let complete: Vec<_> = records
        .iter()
        .filter(|r| records.iter().any(|o| o.trait_ == r.trait_ && o.aspect == r.aspect.opposite()))
        .cloned()
        .collect();
    let summary = aggregate(&complete)?;
    for t in traits {
        match summary.get(&t) {
            Some(s) => out.push_str(&format!(
                "{t}: personality mean {:.2} var {:.2} | fluency mean {:.2} var {:.2}\n",
                s.mean, s.variance, s.fluency_mean, s.fluency_variance
            )),
            None => out.push_str(&format!("{t}: only one aspect scored, no summary\n")),
        }
    }
    if let Some(path) = &a.summary {
        fs::write(out_path(path)?, serde_json::to_string_pretty(&summary)?)?;
        rec.output(path)?;
    }
    rec.config(json!({
        "method": format!("{:?}", a.method).to_lowercase(),
        "gamma": a.gamma,
        "generation": params,
        "judge": { "mode": judge_cfg.mode, "model": judge_cfg.model, "max_in_flight": judge_cfg.max_in_flight },
    }));
    rec.finish(manifest)?;
    Ok(out)
}

fn analyze(a: AnalyzeArgs, argv: &[String], manifest: Option<&Path>) -> Result<String> {
    let mut rec = Recorder::start("analyze", argv);
    rec.input(&a.map)?;
    let map = NeuronMap::load(&a.map).with_context(|| format!("loading map {}", a.map.display()))?;
    let hist = layer_histogram(&map);
    fs::write(out_path(&a.out)?, hist.to_csv())?;
    rec.output(&a.out)?;
    let mut out = format!("wrote layer histogram ({} neurons) to {}\n", map.len(), a.out.display());

    if let (Some(neuron), Some(model_path), Some(corpus_path), Some(values_out)) =
        (&a.neuron, &a.model, &a.corpus, &a.values_out)
    {
        let id = NeuronId::from_str(neuron)?;
        let model = load_model(model_path, &mut rec)?;
        rec.input(corpus_path)?;
        let template = PromptTemplate::resolve(&a.template)?;
        let corpus = corpus_for_template(load_corpus(corpus_path)?, &template)?;
        let gen = a.gen.params(32)?;
        let vh = value_histogram(&model, &corpus, &template, &gen, id, a.bins)?;
        fs::write(out_path(values_out)?, vh.to_csv())?;
        rec.output(values_out)?;
        out.push_str(&format!(
            "wrote value histogram of neuron {id} ({} tokens) to {}\n",
            vh.total(),
            values_out.display()
        ));
    }
    rec.config(json!({ "bins": a.bins, "template": a.template, "neuron": a.neuron }));
    rec.finish(manifest)?;
    Ok(out)
}

fn parse_targets(spec: &str) -> Result<AlignmentTarget> {
    let path = Path::new(spec);
    if path.is_file() {
        let raw: BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
        let mut out = BTreeMap::new();
        for (k, v) in raw {
            out.insert(Trait::from_str(&k)?, v);
        }
        return Ok(AlignmentTarget(out));
    }
    let mut out = BTreeMap::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("target {part:?} is not of the form TRAIT=SCORE"))?;
        let score: f64 = v.trim().parse().with_context(|| format!("score in {part:?}"))?;
        out.insert(Trait::from_str(k.trim())?, score);
    }
    Ok(AlignmentTarget(out))
}

fn align(a: AlignArgs, argv: &[String], manifest: Option<&Path>) -> Result<String> {
    let mut rec = Recorder::start("align", argv);
    let reg = load_registry(&a.maps, a.maps_dir.as_deref(), &mut rec)?;
    let targets = parse_targets(&a.targets)?;
    let spec = alignment_spec(reg.maps(), &targets, a.gamma_base)?;
    let file = SpecFile::from_spec(&spec);
    fs::write(out_path(&a.out)?, serde_json::to_string_pretty(&file)?)?;
    rec.config(json!({ "targets": targets.0, "gamma_base": a.gamma_base }));
    rec.output(&a.out)?;
    rec.finish(manifest)?;
    let mut out = String::new();
    for i in &file.items {
        out.push_str(&format!("{} {} gamma {:.3}\n", i.map_ref, i.direction.as_str(), i.gamma));
    }
    out.push_str(&format!("wrote {}\n", a.out.display()));
    Ok(out)
}

fn serve(a: ServeArgs, argv: &[String], manifest: Option<&Path>) -> Result<String> {
    let mut rec = Recorder::start("serve", argv);
    let cfg = match &a.config {
        Some(p) => {
            rec.input(p)?;
            AppConfig::load(p)?
        }
        None => AppConfig::parse("", Path::new("."))?,
    };
    let model_path = a
        .model
        .clone()
        .or(cfg.model.clone())
        .ok_or_else(|| anyhow!("no model given (use --model or set model in the config)"))?;
    let model = load_model(&model_path, &mut rec)?;
    let mut maps = cfg.maps.clone();
    maps.extend(a.maps.iter().cloned());
    let dir = a.maps_dir.clone().or(cfg.maps_dir.clone());
    let reg = load_registry(&maps, dir.as_deref(), &mut rec)?;
    warn_all(reg.check_provenance(&model, a.force || cfg.force)?);
    let params = GenerationParams {
        max_tokens: a.max_tokens.unwrap_or(cfg.generation.max_tokens),
        repetition_penalty: cfg.generation.repetition_penalty,
        ..GenerationParams::default()
    };
    params.validate()?;
    let addr = a.addr.clone().unwrap_or(cfg.addr.clone());
    let in_flight = a.max_in_flight.unwrap_or(cfg.max_in_flight);
    rec.config(json!({ "addr": addr, "max_in_flight": in_flight, "generation": params }));
    let manifest_path = rec.finish(manifest)?;
    eprintln!("run manifest: {}", manifest_path.display());
    eprintln!("loaded {} map(s)", reg.len());

    let state = Arc::new(AppState::new(model, reg, params, in_flight));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(server::serve(state, &addr))?;
    Ok(String::new())
}

fn replay(a: ReplayArgs) -> Result<String> {
    let m = load_manifest(&a.manifest_file)?;
    if m.command == "replay" || m.command == "serve" {
        bail!("{} runs cannot be replayed", m.command);
    }
    let cwd = std::env::current_dir()?;
    if !m.cwd.is_empty() {
        std::env::set_current_dir(&m.cwd).with_context(|| format!("entering recorded directory {}", m.cwd))?;
    }
    // The rerun writes its own manifest into a scratch location so the
    // original record stays intact.
    let scratch = std::env::temp_dir().join(format!("npti-replay-{}.manifest.json", std::process::id()));
    let mut argv: Vec<String> = Vec::new();
    let mut skip = false;
    for arg in &m.argv {
        if skip {
            skip = false;
            continue;
        }
        if arg == "--manifest" {
            skip = true;
            continue;
        }
        if arg.starts_with("--manifest=") {
            continue;
        }
        argv.push(arg.clone());
    }
    argv.push("--manifest".into());
    argv.push(scratch.display().to_string());
    let cli = Cli::try_parse_from(std::iter::once("npti".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| anyhow!("recorded arguments no longer parse: {e}"))?;
    let result = run(cli, &argv);
    std::env::set_current_dir(cwd)?;
    let stdout = result?;
    let _ = fs::remove_file(&scratch);

    let mut report = String::new();
    let mut mismatches = 0;
    for o in &m.outputs {
        let now = if o.path == STDOUT {
            sha256_hex(stdout.as_bytes())
        } else {
            let p = Path::new(&m.cwd).join(&o.path);
            sha256_hex(&fs::read(&p).with_context(|| format!("reading {}", p.display()))?)
        };
        let ok = now == o.sha256;
        if !ok {
            mismatches += 1;
        }
        report.push_str(&format!("{} {}\n", if ok { "same" } else { "DIFFERENT" }, o.path));
    }
    if mismatches > 0 {
        bail!("{mismatches} output(s) differ from the recorded run:\n{report}");
    }
    report.push_str(&format!("replayed {}: all {} output(s) identical\n", m.command, m.outputs.len()));
    Ok(report)
}
