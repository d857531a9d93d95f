//! `ialign`: importance-alignment pipeline from the command line.
//!
//! Exit status: 0 success, 1 runtime or data error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use importance_alignment::attribution::{AttributionTarget, Baseline, IgConfig};
use importance_alignment::model::{Architecture, Task};
use importance_alignment::oracle::OracleKind;
use importance_alignment::pipeline::{self, Outcome, PairingFile, RunConfig};

#[derive(Parser)]
#[command(name = "ialign", version, about = "Importance alignment between model attributions and explanation oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the 3-way NLI classifier and/or the 6-way explanation-informed classifier.
    Train(TrainArgs),
    /// Integrated-gradients model importance for each eligible example.
    Attribute(AttributeArgs),
    /// Matched and random-baseline oracle vectors plus the shared pairing map.
    Oracle(OracleArgs),
    /// Per-example alignment records and one ΔA report per model and oracle.
    Align(AlignArgs),
    /// Re-render tables, oracle agreement and model comparisons from reports.
    Report(ReportArgs),
    /// train, attribute, oracle, align and report in one go.
    Run(RunArgs),
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Corpus JSONL file.
    #[arg(long)]
    corpus: PathBuf,
    /// Seed for every random stream of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Nli,
    Informed,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Linear,
    Mlp,
}

#[derive(Args, Clone)]
struct TrainingArgs {
    #[arg(long, value_enum, default_value = "linear")]
    architecture: ArchArg,
    #[arg(long, default_value_t = 2)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = 1.0)]
    learning_rate: f64,
    /// Head of the 6-way explanation-informed model.
    #[arg(long, value_enum, default_value = "mlp")]
    informed_architecture: ArchArg,
    #[arg(long = "informed-lr", default_value_t = 0.2)]
    informed_learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Hidden width of MLP heads.
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Dev corpus for per-epoch accuracy.
    #[arg(long)]
    dev: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Zero,
    Pad,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Gold,
    Predicted,
}

#[derive(Args, Clone)]
struct IgArgs {
    /// Riemann steps for integrated gradients.
    #[arg(long, default_value_t = 256)]
    steps: usize,
    #[arg(long, value_enum, default_value = "zero")]
    baseline: BaselineArg,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CorpusArgs,
    #[arg(long, value_enum, default_value = "both")]
    task: TaskArg,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Clone)]
struct AttributeOpts {
    /// 3-way checkpoint; repeat for several models. Defaults to OUT/models/nli3way.json.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Only examples the model gets wrong (recorded prediction if present).
    #[arg(long)]
    wrong_only: bool,
    /// Class whose score is attributed.
    #[arg(long, value_enum, default_value = "gold")]
    target: TargetArg,
}

#[derive(Args)]
struct AttributeArgs {
    #[command(flatten)]
    common: CorpusArgs,
    #[command(flatten)]
    ig: IgArgs,
    #[command(flatten)]
    opts: AttributeOpts,
}

#[derive(Clone, Copy, ValueEnum)]
enum SoftTargetArg {
    Matched,
    Mismatched,
}

#[derive(Args, Clone)]
struct OracleOpts {
    /// Oracle kinds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "hard,soft,expert")]
    oracles: Vec<OracleKind>,
    /// 6-way checkpoint for the soft oracle. Defaults to OUT/models/informed6way.json.
    #[arg(long)]
    informed_model: Option<PathBuf>,
    /// Expert annotation JSONL. Defaults to <corpus stem>.experts.jsonl beside the corpus.
    #[arg(long)]
    experts: Option<PathBuf>,
    /// Stop-word list, one word per line. Defaults to the bundled English list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Explanation-match half of the soft oracle's IG target.
    #[arg(long, value_enum, default_value = "matched")]
    soft_target: SoftTargetArg,
    /// Pair every example with its own explanation (ΔA is then exactly 0).
    #[arg(long)]
    debug_identity_pairing: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: CorpusArgs,
    #[command(flatten)]
    ig: IgArgs,
    #[command(flatten)]
    opts: OracleOpts,
}

#[derive(Args)]
struct AlignArgs {
    /// Output directory of the attribute and oracle stages.
    #[arg(long)]
    out: PathBuf,
    /// Oracle kinds to align against. Defaults to those the oracle stage produced.
    #[arg(long, value_delimiter = ',')]
    oracles: Vec<OracleKind>,
    /// Must equal the seed the oracle stage paired with.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CorpusArgs,
    #[command(flatten)]
    training: TrainingArgs,
    #[command(flatten)]
    ig: IgArgs,
    #[command(flatten)]
    attribute: AttributeOpts,
    #[command(flatten)]
    oracle: OracleOpts,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn require_file(what: &str, path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("output directory {} does not exist", path.display())))
    }
}

fn base_config(common: &CorpusArgs) -> Result<RunConfig, Failure> {
    require_file("corpus", &common.corpus)?;
    let mut c = RunConfig::new(&common.corpus, &common.out);
    c.seed = common.seed;
    Ok(c)
}

fn apply_training(c: &mut RunConfig, t: &TrainingArgs) -> Result<(), Failure> {
    if let Some(dev) = &t.dev {
        require_file("dev corpus", dev)?;
    }
    c.dev_corpus_path = t.dev.clone();
    let arch = |a: ArchArg| match a {
        ArchArg::Linear => Architecture::BagOfEmbeddingsLinear,
        ArchArg::Mlp => Architecture::MeanEmbeddingMlp,
    };
    for (cfg, a, lr) in [
        (&mut c.training, t.architecture, t.learning_rate),
        (&mut c.informed_training, t.informed_architecture, t.informed_learning_rate),
    ] {
        cfg.architecture = arch(a);
        cfg.learning_rate = lr;
        cfg.epochs = t.epochs;
        cfg.batch_size = t.batch_size;
        cfg.dim = t.dim;
        cfg.hidden = t.hidden;
        cfg.seed = c.seed;
    }
    Ok(())
}

fn ig_config(ig: &IgArgs, target: AttributionTarget) -> IgConfig {
    IgConfig {
        steps: ig.steps,
        baseline: match ig.baseline {
            BaselineArg::Zero => Baseline::ZeroEmbedding,
            BaselineArg::Pad => Baseline::PadEmbedding,
        },
        target,
    }
}

fn apply_attribute(c: &mut RunConfig, a: &AttributeOpts) -> Result<(), Failure> {
    for m in &a.models {
        require_file("model checkpoint", m)?;
    }
    c.model_paths = a.models.clone();
    c.wrong_only = a.wrong_only;
    c.ig.target = match a.target {
        TargetArg::Gold => AttributionTarget::GoldLabel,
        TargetArg::Predicted => AttributionTarget::PredictedLabel,
    };
    Ok(())
}

fn apply_oracle(c: &mut RunConfig, o: &OracleOpts) -> Result<(), Failure> {
    if o.oracles.is_empty() {
        return Err(Failure::Usage("--oracles needs at least one kind".into()));
    }
    if let Some(p) = &o.informed_model {
        require_file("informed model checkpoint", p)?;
    }
    if let Some(p) = &o.stopwords {
        require_file("stop-word list", p)?;
    }
    let mut kinds = o.oracles.clone();
    kinds.sort();
    kinds.dedup();
    c.oracles = kinds;
    c.informed_model_path = o.informed_model.clone();
    c.experts_path = o.experts.clone();
    c.stopwords_path = o.stopwords.clone();
    c.soft_target_matched = matches!(o.soft_target, SoftTargetArg::Matched);
    c.identity_pairing = o.debug_identity_pairing;
    Ok(())
}

/// Config recorded by the oracle stage, retargeted at `out`.
fn stage_config(out: &Path) -> Result<RunConfig, Failure> {
    require_dir(out)?;
    let layout = pipeline::Layout::new(out);
    let pairing: PairingFile = importance_alignment::io::read_json(&layout.pairing())
        .with_context(|| format!("reading {}; run the oracle stage first", layout.pairing().display()))?;
    let mut c = pairing.run_config;
    c.output_dir = out.to_path_buf();
    Ok(c)
}

fn finish(outcome: &Outcome) {
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for p in &outcome.written {
        eprintln!("wrote {}", p.display());
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train(a) => {
            let mut c = base_config(&a.common)?;
            apply_training(&mut c, &a.training)?;
            c.tasks = match a.task {
                TaskArg::Nli => vec![Task::Nli3Way],
                TaskArg::Informed => vec![Task::ExplanationInformed6Way],
                TaskArg::Both => vec![Task::Nli3Way, Task::ExplanationInformed6Way],
            };
            finish(&pipeline::train(&c).context("train")?);
        }
        Command::Attribute(a) => {
            let mut c = base_config(&a.common)?;
            c.ig = ig_config(&a.ig, AttributionTarget::GoldLabel);
            apply_attribute(&mut c, &a.opts)?;
            finish(&pipeline::attribute(&c).context("attribute")?);
        }
        Command::Oracle(a) => {
            let mut c = base_config(&a.common)?;
            c.ig = ig_config(&a.ig, AttributionTarget::GoldLabel);
            apply_oracle(&mut c, &a.opts)?;
            finish(&pipeline::oracle(&c).context("oracle")?);
        }
        Command::Align(a) => {
            let mut c = stage_config(&a.out)?;
            if let Some(seed) = a.seed {
                c.seed = seed;
            }
            if !a.oracles.is_empty() {
                c.oracles = a.oracles;
            }
            let outcome = pipeline::align(&c).context("align")?;
            finish(&outcome);
        }
        Command::Report(a) => {
            let c = stage_config(&a.out)?;
            let (outcome, summary) = pipeline::report(&c).context("report")?;
            finish(&outcome);
            print!("{}", summary.markdown);
        }
        Command::Run(a) => {
            let mut c = base_config(&a.common)?;
            apply_training(&mut c, &a.training)?;
            c.ig = ig_config(&a.ig, AttributionTarget::GoldLabel);
            apply_attribute(&mut c, &a.attribute)?;
            apply_oracle(&mut c, &a.oracle)?;
            let (outcome, summary) = pipeline::run(&c).context("run")?;
            finish(&outcome);
            print!("{}", summary.markdown);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            let mut cmd = Cli::command();
            eprintln!("error: {msg}\n\n{}", cmd.render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
