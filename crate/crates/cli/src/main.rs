mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use namegraph::communities::Algorithm;
use namegraph::graph::GraphMethod;
use namegraph::inference::InferenceMethod;
use namegraph::pipeline::{ClassifierKind, PairStrategy};

#[derive(Parser, Debug)]
#[command(name = "namegraph", version, about = "Cluster ambiguous name mentions into identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Inputs shared by the corpus-driven commands.
#[derive(Args, Debug, Clone)]
pub struct Inputs {
    /// TOML run configuration; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSONL corpus, one document per line
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Mention (MWE1) or token (MWT1) embedding file
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Output directory
    #[arg(long, env = config::OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Global seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GraphFlags {
    #[arg(long, value_enum)]
    pub graph_method: Option<GraphMethodArg>,
    /// Neighbors per mention for kNN graphs
    #[arg(long)]
    pub k: Option<usize>,
    /// Radius multiplier for surface-form graphs
    #[arg(long)]
    pub multiplier: Option<f64>,
    /// Drop edges lighter than this
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum GraphMethodArg {
    Knn,
    SurfaceForm,
}

impl From<GraphMethodArg> for GraphMethod {
    fn from(v: GraphMethodArg) -> Self {
        match v {
            GraphMethodArg::Knn => GraphMethod::Knn,
            GraphMethodArg::SurfaceForm => GraphMethod::SurfaceForm,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum AlgorithmArg {
    Leiden,
    LabelPropagation,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(v: AlgorithmArg) -> Self {
        match v {
            AlgorithmArg::Leiden => Algorithm::Leiden,
            AlgorithmArg::LabelPropagation => Algorithm::LabelPropagation,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum MethodArg {
    Naive,
    Communities,
    Antecedent,
}

impl From<MethodArg> for InferenceMethod {
    fn from(v: MethodArg) -> Self {
        match v {
            MethodArg::Naive => InferenceMethod::Naive,
            MethodArg::Communities => InferenceMethod::Communities,
            MethodArg::Antecedent => InferenceMethod::Antecedent,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ClassifierArg {
    Trained,
    Oracle,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(v: ClassifierArg) -> Self {
        match v {
            ClassifierArg::Trained => ClassifierKind::Trained,
            ClassifierArg::Oracle => ClassifierKind::Oracle,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum StrategyArg {
    Network,
    Nearest,
}

impl From<StrategyArg> for PairStrategy {
    fn from(v: StrategyArg) -> Self {
        match v {
            StrategyArg::Network => PairStrategy::Network,
            StrategyArg::Nearest => PairStrategy::Nearest,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartArg {
    All,
    Train,
    Dev,
    Test,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommunityFlags {
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Modularity resolution γ
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Label propagation counts edges instead of summing weights
    #[arg(long)]
    pub unweighted: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with planted identities and embeddings
    Synth(SynthArgs),
    /// Build a mention graph and write it as an edge list
    Graph {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        graph: GraphFlags,
    },
    /// Detect communities in an edge-list graph
    Communities {
        /// Edge list written by `graph`
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = config::OUT_ENV)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        communities: CommunityFlags,
    },
    /// Sample labelled antecedent pairs
    Pairs {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        graph: GraphFlags,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long)]
        nearest_n: Option<usize>,
        /// Only pairs along graph edges
        #[arg(long)]
        no_add_all_positives: bool,
        /// Part of the configured split to sample from
        #[arg(long, value_enum, default_value = "all")]
        part: PartArg,
    },
    /// Train the antecedent classifier on sampled pairs
    Train {
        #[command(flatten)]
        inputs: Inputs,
        /// Pairs CSV written by `pairs`
        #[arg(long)]
        pairs: PathBuf,
        /// Pairs for early stopping
        #[arg(long)]
        dev_pairs: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Cluster a corpus
    Infer {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        graph: GraphFlags,
        #[command(flatten)]
        communities: CommunityFlags,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Model written by `train` (antecedent method)
        #[arg(long)]
        model: Option<PathBuf>,
        /// Use gold labels as a perfect pair classifier
        #[arg(long)]
        oracle: bool,
        /// File of doc ids (one per line) to infer; other documents are history
        #[arg(long)]
        target_docs: Option<PathBuf>,
    },
    /// Score a clustering against the corpus' gold identities
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// `mention<TAB>cluster` file
        #[arg(long)]
        clustering: PathBuf,
        #[arg(long)]
        exclude_gold_singletons: bool,
        #[arg(long, env = config::OUT_ENV)]
        out: Option<PathBuf>,
    },
    /// Best edge threshold and dev CoNLL for each k
    SweepK {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        communities: CommunityFlags,
        /// Comma-separated k values
        #[arg(long = "k-values", value_delimiter = ',', default_value = "5,10,20")]
        k_values: Vec<usize>,
        #[arg(long, value_enum, default_value = "communities")]
        method: MethodArg,
    },
    /// Test CoNLL as a function of training-set size
    LearningCurve {
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated fractions of the training documents
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8,1.0")]
        fractions: Vec<f64>,
        #[arg(long, value_enum)]
        classifier: Option<ClassifierArg>,
    },
    /// Run the configured pipeline end to end
    Run {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        graph: GraphFlags,
        #[command(flatten)]
        communities: CommunityFlags,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum)]
        classifier: Option<ClassifierArg>,
        #[arg(long)]
        exclude_gold_singletons: bool,
    },
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// TOML file with generator settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = config::OUT_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_individuals: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub min_mentions: Option<usize>,
    #[arg(long)]
    pub max_mentions: Option<usize>,
    #[arg(long)]
    pub homograph_rate: Option<f64>,
    #[arg(long)]
    pub synonym_rate: Option<f64>,
    #[arg(long)]
    pub center_separation: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Graph { inputs, graph } => commands::graph(inputs, graph),
        Command::Communities { graph, config, out, seed, communities } => {
            commands::communities(graph, config, out, seed, communities)
        }
        Command::Pairs { inputs, graph, strategy, nearest_n, no_add_all_positives, part } => {
            commands::pairs(inputs, graph, strategy, nearest_n, no_add_all_positives, part)
        }
        Command::Train { inputs, pairs, dev_pairs, train } => commands::train(inputs, pairs, dev_pairs, train),
        Command::Infer { inputs, graph, communities, method, model, oracle, target_docs } => {
            commands::infer(inputs, graph, communities, method, model, oracle, target_docs)
        }
        Command::Eval { corpus, clustering, exclude_gold_singletons, out } => {
            commands::eval(corpus, clustering, exclude_gold_singletons, out)
        }
        Command::SweepK { inputs, communities, k_values, method } => {
            commands::sweep_k(inputs, communities, k_values, method)
        }
        Command::LearningCurve { inputs, fractions, classifier } => {
            commands::learning_curve(inputs, fractions, classifier)
        }
        Command::Run { inputs, graph, communities, train, method, classifier, exclude_gold_singletons } => {
            commands::run(inputs, graph, communities, train, method, classifier, exclude_gold_singletons)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
