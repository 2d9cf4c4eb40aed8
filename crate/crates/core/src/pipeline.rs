//! End-to-end runs over one corpus: split, graph, inference, evaluation,
//! plus the k/threshold sweep and the training-size learning curve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antecedent::{
    fingerprint, sample_pairs_nearest, sample_pairs_network, train, Mlp, ModelScorer, ModelSidecar, OracleScorer,
    PairExample, PairScorer, TrainConfig, TrainReport, MODEL_MAGIC,
};
use crate::clustering::Clustering;
use crate::communities::{detect, Algorithm, CommunityConfig};
use crate::corpus::{split, Corpus, SplitSpec, SubCorpus};
use crate::embeddings::Embeddings;
use crate::error::{invalid, Error, Result};
use crate::graph::{build_graph, build_knn, threshold_edges, Graph, GraphConfig};
use crate::inference::{antecedent_cluster, communities_to_clustering, naive_cluster, InferenceConfig, InferenceMethod};
use crate::metrics::{evaluate, EvalOptions, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStrategy {
    /// Pairs along graph edges.
    #[default]
    Network,
    /// Nearest earlier positives and negatives by cosine distance.
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    #[serde(default)]
    pub strategy: PairStrategy,
    #[serde(default = "default_true")]
    pub add_all_positives: bool,
    #[serde(default = "default_nearest")]
    pub nearest_n: usize,
}

fn default_true() -> bool {
    true
}

fn default_nearest() -> usize {
    20
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig { strategy: PairStrategy::Network, add_all_positives: true, nearest_n: default_nearest() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Trained,
    /// Scores 1 for gold-coreferent pairs and 0 otherwise.
    Oracle,
}

/// Every algorithmic setting of a run. The global `seed` drives the split,
/// community detection and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fractions")]
    pub split: [f64; 3],
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub communities: CommunityConfig,
    #[serde(default)]
    pub pairs: PairConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub classifier: ClassifierKind,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub eval: EvalOptions,
}

fn default_fractions() -> [f64; 3] {
    SplitSpec::default().fractions
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            split: default_fractions(),
            graph: GraphConfig::default(),
            communities: CommunityConfig::default(),
            pairs: PairConfig::default(),
            train: TrainConfig::default(),
            classifier: ClassifierKind::default(),
            inference: InferenceConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl RunConfig {
    /// Copy with the global seed pushed into every seeded component.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.communities.seed = self.seed;
        c.train.seed = self.seed;
        c
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { fractions: self.split, seed: self.seed }
    }

    pub fn validate(&self) -> Result<()> {
        self.split_spec().validate()?;
        self.communities.validate()?;
        self.train.validate()?;
        self.inference.validate()?;
        self.eval.validate()?;
        if self.graph.k == 0 {
            return Err(Error::Config("graph.k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Mlp<f64>,
    pub report: TrainReport,
    pub sidecar: ModelSidecar,
}

/// Everything a run produces. Mention ids refer to the input corpus.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub method: InferenceMethod,
    /// The graph inference ran on.
    pub graph: Graph<f64>,
    /// Clusters of the test mentions.
    pub clustering: Clustering,
    pub gold: Clustering,
    pub report: MetricReport<f64>,
    pub model: Option<TrainedModel>,
    /// Documents in train, dev and test.
    pub split_sizes: [usize; 3],
}

fn check_aligned(corpus: &Corpus, emb: &Embeddings<f64>) -> Result<()> {
    if emb.len() != corpus.num_mentions() {
        return invalid(format!("{} embeddings for {} mentions", emb.len(), corpus.num_mentions()));
    }
    Ok(())
}

/// Re-indexes a subcorpus graph by parent mention ids.
pub fn lift_graph(graph: &Graph<f64>, original_ids: &[usize], num_nodes: usize) -> Graph<f64> {
    Graph::from_edges(num_nodes, graph.edges().iter().map(|e| (original_ids[e.i], original_ids[e.j], e.weight)))
        .expect("lifting preserves validity")
}

/// Pair examples from one part of the corpus, with parent mention ids.
pub fn sample_pairs(sub: &SubCorpus, emb: &Embeddings<f64>, graph: &GraphConfig, pairs: &PairConfig) -> Result<Vec<PairExample>> {
    if sub.corpus.num_mentions() < 2 {
        return Ok(Vec::new());
    }
    let local = emb.select_rows(&sub.original_ids);
    let found = match pairs.strategy {
        PairStrategy::Network => {
            let g = build_graph(&local, &sub.corpus, graph)?;
            sample_pairs_network(&sub.corpus, &g, pairs.add_all_positives)?
        }
        PairStrategy::Nearest => sample_pairs_nearest(&sub.corpus, &local, pairs.nearest_n)?,
    };
    Ok(found
        .into_iter()
        .map(|p| PairExample { mention_i: sub.original_ids[p.mention_i], mention_j: sub.original_ids[p.mention_j], ..p })
        .collect())
}

/// Trains on `train_pairs` with early stopping on `dev_pairs`.
pub fn train_model(train_pairs: &[PairExample], dev_pairs: &[PairExample], emb: &Embeddings<f64>, config: &TrainConfig) -> Result<TrainedModel> {
    let (model, report) = train(train_pairs, dev_pairs, emb, config)?;
    let sidecar = ModelSidecar {
        format: String::from_utf8_lossy(MODEL_MAGIC).into_owned(),
        layer_sizes: model.sizes().to_vec(),
        train_config: config.clone(),
        training_pairs: train_pairs.len(),
        fingerprint: fingerprint(train_pairs, emb),
    };
    Ok(TrainedModel { model, report, sidecar })
}

fn gold_of(corpus: &Corpus, part: &SubCorpus) -> Clustering {
    let mut keep = vec![false; corpus.num_mentions()];
    for &m in &part.original_ids {
        keep[m] = true;
    }
    Clustering::gold_from_corpus(corpus).restrict(|m| keep[m])
}

/// Graph over one part of the corpus, re-indexed by parent ids.
fn part_graph(corpus: &Corpus, emb: &Embeddings<f64>, part: &SubCorpus, config: &GraphConfig) -> Result<(Embeddings<f64>, Graph<f64>, Graph<f64>)> {
    let local = emb.select_rows(&part.original_ids);
    let g = build_graph(&local, &part.corpus, config)?;
    let lifted = lift_graph(&g, &part.original_ids, corpus.num_mentions());
    Ok((local, g, lifted))
}

/// Unsupervised clustering of one part (naive or communities), parent ids.
fn cluster_part(
    corpus: &Corpus,
    emb: &Embeddings<f64>,
    part: &SubCorpus,
    method: InferenceMethod,
    graph: &GraphConfig,
    communities: &CommunityConfig,
) -> Result<(Graph<f64>, Clustering)> {
    let (local, g, lifted) = part_graph(corpus, emb, part, graph)?;
    let c = match method {
        InferenceMethod::Naive => naive_cluster(&part.corpus, &g, &local)?,
        InferenceMethod::Communities => communities_to_clustering(&detect(&g, communities)?),
        InferenceMethod::Antecedent => return Err(Error::Config("antecedent inference is supervised".into())),
    };
    Ok((lifted, c.map_mentions(|m| part.original_ids[m])))
}

/// Antecedent inference on `test`, with `train_docs` as already-seen history.
fn antecedent_part(
    corpus: &Corpus,
    emb: &Embeddings<f64>,
    train_docs: &[usize],
    test: &SubCorpus,
    model: Option<&Mlp<f64>>,
    config: &RunConfig,
) -> Result<(Graph<f64>, Clustering)> {
    let mut docs = train_docs.to_vec();
    docs.extend_from_slice(&test.doc_indices);
    let combined = corpus.subset(&docs);
    let mut is_test = vec![false; corpus.num_mentions()];
    for &m in &test.original_ids {
        is_test[m] = true;
    }
    let targets: Vec<bool> = combined.original_ids.iter().map(|&m| is_test[m]).collect();
    let (local, g, lifted) = part_graph(corpus, emb, &combined, &config.graph)?;
    let oracle;
    let trained;
    let scorer: &dyn PairScorer = match model {
        Some(m) => {
            trained = ModelScorer::new(m, &local, &combined.corpus)?;
            &trained
        }
        None => {
            oracle = OracleScorer::new(&combined.corpus);
            &oracle
        }
    };
    let c = antecedent_cluster(&combined.corpus, &targets, &g, scorer, &config.inference)?;
    let response = c.restrict(|m| targets[m]).map_mentions(|m| combined.original_ids[m]);
    Ok((lifted, response))
}

/// Trains (unless the oracle is configured) on the given training documents
/// and clusters the test part.
fn supervised(
    corpus: &Corpus,
    emb: &Embeddings<f64>,
    train_part: &SubCorpus,
    dev: &SubCorpus,
    test: &SubCorpus,
    config: &RunConfig,
) -> Result<(Graph<f64>, Clustering, Option<TrainedModel>)> {
    let trained = match config.classifier {
        ClassifierKind::Oracle => None,
        ClassifierKind::Trained => {
            let tp = sample_pairs(train_part, emb, &config.graph, &config.pairs)?;
            let dp = sample_pairs(dev, emb, &config.graph, &config.pairs)?;
            Some(train_model(&tp, &dp, emb, &config.train)?)
        }
    };
    let (g, c) = antecedent_part(corpus, emb, &train_part.doc_indices, test, trained.as_ref().map(|t| &t.model), config)?;
    Ok((g, c, trained))
}

/// Split, infer with the configured method, and score the test part.
pub fn run_pipeline(corpus: &Corpus, emb: &Embeddings<f64>, config: &RunConfig) -> Result<RunOutcome> {
    let config = config.resolved();
    config.validate()?;
    check_aligned(corpus, emb)?;
    let parts = split(corpus, &config.split_spec())?;
    let split_sizes = [parts.train.doc_indices.len(), parts.dev.doc_indices.len(), parts.test.doc_indices.len()];
    let method = config.inference.method;
    let (graph, clustering, model) = match method {
        InferenceMethod::Antecedent => supervised(corpus, emb, &parts.train, &parts.dev, &parts.test, &config)?,
        m => {
            let (g, c) = cluster_part(corpus, emb, &parts.test, m, &config.graph, &config.communities)?;
            (g, c, None)
        }
    };
    let gold = gold_of(corpus, &parts.test);
    let report = evaluate(&gold, &clustering, &config.eval);
    Ok(RunOutcome { method, graph, clustering, gold, report, model, split_sizes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    /// Best edge threshold on the grid.
    pub threshold: f64,
    pub conll: f64,
}

/// `{0}` plus the nine nearest-rank deciles of the edge weights, ascending
/// and deduplicated.
pub fn threshold_grid(graph: &Graph<f64>) -> Vec<f64> {
    let mut w: Vec<f64> = graph.edges().iter().map(|e| e.weight).collect();
    w.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    let mut grid = vec![0.0];
    if !w.is_empty() {
        for d in 1..10 {
            let rank = (d * w.len()).div_ceil(10);
            grid.push(w[rank.max(1) - 1]);
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    grid.dedup();
    grid
}

/// For each k, the threshold with the best CoNLL on `dev` (first on ties).
pub fn sweep_k(
    dev: &Corpus,
    emb: &Embeddings<f64>,
    k_values: &[usize],
    method: InferenceMethod,
    communities: &CommunityConfig,
    eval: &EvalOptions,
) -> Result<Vec<SweepRow>> {
    check_aligned(dev, emb)?;
    if method == InferenceMethod::Antecedent {
        return Err(Error::Config("sweep-k runs unsupervised methods only".into()));
    }
    let gold = Clustering::gold_from_corpus(dev);
    let graphs: Vec<(usize, Graph<f64>)> =
        k_values.iter().map(|&k| build_knn(emb, k).map(|g| (k, g))).collect::<Result<_>>()?;
    let jobs: Vec<(usize, f64)> = graphs
        .iter()
        .enumerate()
        .flat_map(|(gi, (_, g))| threshold_grid(g).into_iter().map(move |t| (gi, t)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(gi, t)| {
            let g = threshold_edges(&graphs[gi].1, t);
            let c = match method {
                InferenceMethod::Naive => naive_cluster(dev, &g, emb)?,
                _ => communities_to_clustering(&detect(&g, communities)?),
            };
            Ok(evaluate::<f64>(&gold, &c, eval).conll)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(graphs.len());
    for (gi, (k, _)) in graphs.iter().enumerate() {
        let mut best: Option<(f64, f64)> = None;
        for ((g, t), s) in jobs.iter().zip(&scores) {
            if *g == gi && best.is_none_or(|(bs, _)| *s > bs) {
                best = Some((*s, *t));
            }
        }
        let (conll, threshold) = best.expect("grid contains 0");
        rows.push(SweepRow { k: *k, threshold, conll });
    }
    Ok(rows)
}

/// Runs [`sweep_k`] on the dev part of the configured split.
pub fn sweep_k_on_dev(corpus: &Corpus, emb: &Embeddings<f64>, config: &RunConfig, k_values: &[usize]) -> Result<Vec<SweepRow>> {
    let config = config.resolved();
    config.validate()?;
    check_aligned(corpus, emb)?;
    let parts = split(corpus, &config.split_spec())?;
    let dev_emb = emb.select_rows(&parts.dev.original_ids);
    sweep_k(&parts.dev.corpus, &dev_emb, k_values, config.inference.method, &config.communities, &config.eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub fraction: f64,
    pub train_docs: usize,
    pub positive_pairs: usize,
    /// `None` when the row is flagged.
    pub conll: Option<f64>,
    /// Best community-detection CoNLL on the same test part.
    pub community_conll: f64,
    pub flag: Option<String>,
}

/// Leading `ceil(fraction · n)` of `n` training documents.
pub fn leading_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize
}

/// Best CoNLL of label propagation and Leiden on the test part.
fn best_community_conll(corpus: &Corpus, emb: &Embeddings<f64>, test: &SubCorpus, config: &RunConfig) -> Result<f64> {
    let gold = gold_of(corpus, test);
    let mut best = f64::NEG_INFINITY;
    for algorithm in [Algorithm::LabelPropagation, Algorithm::Leiden] {
        let cc = CommunityConfig { algorithm, ..config.communities.clone() };
        let (_, c) = cluster_part(corpus, emb, test, InferenceMethod::Communities, &config.graph, &cc)?;
        best = best.max(evaluate::<f64>(&gold, &c, &config.eval).conll);
    }
    Ok(best)
}

/// Antecedent CoNLL on the test part as the training documents grow.
pub fn learning_curve(corpus: &Corpus, emb: &Embeddings<f64>, config: &RunConfig, fractions: &[f64]) -> Result<Vec<CurveRow>> {
    let config = config.resolved();
    config.validate()?;
    check_aligned(corpus, emb)?;
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!("fractions must lie in (0, 1], got {f}")));
    }
    let parts = split(corpus, &config.split_spec())?;
    let community_conll = best_community_conll(corpus, emb, &parts.test, &config)?;
    let gold = gold_of(corpus, &parts.test);
    let dev_pairs = match config.classifier {
        ClassifierKind::Trained => sample_pairs(&parts.dev, emb, &config.graph, &config.pairs)?,
        ClassifierKind::Oracle => Vec::new(),
    };
    fractions
        .par_iter()
        .map(|&fraction| {
            let n = leading_count(parts.train.doc_indices.len(), fraction);
            let docs = &parts.train.doc_indices[..n];
            let train_part = corpus.subset(docs);
            let mut row = CurveRow { fraction, train_docs: n, positive_pairs: 0, conll: None, community_conll, flag: None };
            let model = match config.classifier {
                ClassifierKind::Oracle => None,
                ClassifierKind::Trained => {
                    let tp = sample_pairs(&train_part, emb, &config.graph, &config.pairs)?;
                    row.positive_pairs = tp.iter().filter(|p| p.label).count();
                    if row.positive_pairs == 0 {
                        row.flag = Some("no positive training pairs".into());
                        return Ok(row);
                    }
                    match train_model(&tp, &dev_pairs, emb, &config.train) {
                        Ok(t) => Some(t.model),
                        Err(Error::Training(m)) => {
                            row.flag = Some(m);
                            return Ok(row);
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            let (_, c) = antecedent_part(corpus, emb, docs, &parts.test, model.as_ref(), &config)?;
            row.conll = Some(evaluate::<f64>(&gold, &c, &config.eval).conll);
            Ok(row)
        })
        .collect()
}
