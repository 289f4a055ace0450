mod commands;
mod config;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use metacausal::agents::{ActMode, AgentKind};
use metacausal::cbn::{Mechanism, PermutationGroup};
use metacausal::env::{Condition, Setting};
use std::path::PathBuf;
use std::process::ExitCode;

/// Bad flags, config keys or values. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "metacausal",
    version,
    about = "Causal reasoning tasks on small Gaussian graphs: data, oracles, training and evaluation"
)]
pub struct Cli {
    /// Worker threads; 1 runs everything sequentially [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a held-out test split and its training complement
    Gen(GenArgs),
    /// Answer an exact query on one graph and print JSON to stdout
    Oracle(OracleArgs),
    /// Train an LSTM actor-critic agent
    Train(TrainArgs),
    /// Evaluate an agent and write its report
    Eval(EvalArgs),
    /// Merge evaluation reports into CSV, JSON and SVG
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GroupArg {
    AllNodes,
    HiddenFixed,
}

impl From<GroupArg> for PermutationGroup {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::AllNodes => PermutationGroup::AllNodes,
            GroupArg::HiddenFixed => PermutationGroup::HiddenFixed,
        }
    }
}

impl std::str::FromStr for GroupArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <GroupArg as ValueEnum>::from_str(s, false)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MechanismArg {
    Linear,
    Quadratic,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Linear => Mechanism::Linear,
            MechanismArg::Quadratic => Mechanism::Quadratic,
        }
    }
}

impl std::str::FromStr for MechanismArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <MechanismArg as ValueEnum>::from_str(s, false)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActModeArg {
    Sample,
    Greedy,
}

impl From<ActModeArg> for ActMode {
    fn from(m: ActModeArg) -> Self {
        match m {
            ActModeArg::Sample => ActMode::Sample,
            ActModeArg::Greedy => ActMode::Greedy,
        }
    }
}

impl std::str::FromStr for ActModeArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <ActModeArg as ValueEnum>::from_str(s, false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Query {
    Joint,
    Cond,
    Do,
    Cf,
    Dsep,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// key = value file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Nodes per graph, hidden node included, at most 6 [default: 5]
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed for the graph generator [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of distinct equivalence classes in the test split [default: 12]
    #[arg(long)]
    pub seeds_per_class: Option<usize>,
    /// Relabelings that define an equivalence class [default: all-nodes]
    #[arg(long, value_enum)]
    pub group: Option<GroupArg>,
    /// Output directory for train.jsonl, test.jsonl and manifest.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Graph file holding one JSON graph record
    #[arg(long)]
    pub graph: PathBuf,
    /// Query kind
    #[arg(long, value_enum)]
    pub query: Query,
    /// Node to condition on (cond) or clamp (do, cf)
    #[arg(long)]
    pub node: Option<usize>,
    /// Value for --node [default: 5]
    #[arg(long, allow_hyphen_values = true)]
    pub value: Option<f64>,
    /// cf: comma-separated values of the factual sample, either all N nodes
    /// (exact abduction) or the N-1 observables (posterior-mean noise)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub observed: Vec<f64>,
    /// cf: node clamped in the factual sample
    #[arg(long)]
    pub factual_node: Option<usize>,
    /// cf: value of the factual clamp
    #[arg(long, allow_hyphen_values = true)]
    pub factual_value: Option<f64>,
    /// dsep: first node set, comma-separated
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<usize>,
    /// dsep: second node set
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<usize>,
    /// dsep: conditioning set
    #[arg(long, value_delimiter = ',')]
    pub z: Vec<usize>,
    /// Directory for manifest.json and result.json; stdout only when unset
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// key = value file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for checkpoint.json, curve.csv and manifest.json
    #[arg(long)]
    pub out: PathBuf,
    /// Task setting [default: observational]
    #[arg(long)]
    pub setting: Option<Setting>,
    /// Active or random-action condition [default: active]
    #[arg(long)]
    pub condition: Option<Condition>,
    /// Nodes per graph [default: 5]
    #[arg(long)]
    pub n: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory written by `gen`; the training pool excludes its test split.
    /// When unset a split is generated from --split-seed
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    /// Seed of the generated split when --graphs is unset [default: --seed]
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Test-split size when --graphs is unset [default: 12]
    #[arg(long)]
    pub seeds_per_class: Option<usize>,
    /// Equivalence group when --graphs is unset [default: all-nodes]
    #[arg(long, value_enum)]
    pub group: Option<GroupArg>,
    /// Mechanism used for training graphs [default: linear]
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismArg>,
    /// Start from the large-batch, long-run profile instead of the desk one
    #[arg(long)]
    pub paper_scale: bool,
    /// Episodes per update [default: 128, --paper-scale 1024]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Environment-step budget [default: 200000, --paper-scale 1e7]
    #[arg(long)]
    pub total_env_steps: Option<u64>,
    /// LSTM width [default: 192]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Initial learning rate [default: 3e-4, --paper-scale 9e-6]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Per-decay factor; switches to an exponential schedule
    #[arg(long)]
    pub lr_decay_rate: Option<f64>,
    /// Environment steps per decay of the exponential schedule [default: 1000]
    #[arg(long)]
    pub lr_decay_every: Option<u64>,
    /// Entropy weight at step 0, annealed linearly to 0 [default: 0.25]
    #[arg(long)]
    pub entropy_start: Option<f64>,
    /// Baseline loss weight [default: 0.05]
    #[arg(long)]
    pub baseline_weight: Option<f64>,
    /// Discount factor [default: 0.93]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Global gradient-norm clip [default: 50]
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Episodes between training-curve rows [default: 1000]
    #[arg(long)]
    pub log_every: Option<u64>,
    /// Checkpoint to continue from; its config replaces every other setting
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// key = value file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for eval.json, eval.csv and manifest.json
    #[arg(long)]
    pub out: PathBuf,
    /// Agent kind: learned, optimal-associative, optimal-cause-effect,
    /// optimal-counterfactual, random, q-total or q-episode
    /// [default: learned when --checkpoint is given]
    #[arg(long)]
    pub agent: Option<AgentKind>,
    /// Trained checkpoint; repeat for one replica per checkpoint
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// Directory written by `gen`; evaluates every test graph with every
    /// quiz target. When unset, episodes are sampled from all graphs
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    /// Task setting; a checkpoint's own setting is used when unset
    #[arg(long)]
    pub setting: Option<Setting>,
    /// Condition; a checkpoint's own condition is used when unset
    #[arg(long)]
    pub condition: Option<Condition>,
    /// Nodes per graph when neither --graphs nor --checkpoint fixes it [default: 5]
    #[arg(long)]
    pub n: Option<usize>,
    /// Mechanism of evaluation graphs [default: linear]
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismArg>,
    /// Evaluation seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicas for baseline and Q agents [default: 1]
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Episodes per replica when --graphs is unset [default: 10000]
    #[arg(long)]
    pub episodes: Option<usize>,
    /// How a learned agent picks actions [default: sample]
    #[arg(long, value_enum)]
    pub act_mode: Option<ActModeArg>,
    /// Training episodes for Q agents [default: 100000]
    #[arg(long)]
    pub q_episodes: Option<usize>,
    /// Write step records of the first episodes as JSON lines to this file
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Episodes recorded by --trace [default: 10]
    #[arg(long)]
    pub trace_episodes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation report files (eval.json or merged report.json)
    #[arg(long, num_args = 1.., required = true)]
    pub eval: Vec<PathBuf>,
    /// Output directory for report.csv, report.json, report.svg and manifest.json
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
