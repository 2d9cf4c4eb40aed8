//! Turning graphs and pair scores into clusterings.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antecedent::PairScorer;
use crate::assignment::{solve_max, CostMatrix};
use crate::communities::Partition;
use crate::corpus::Corpus;
use crate::embeddings::Embeddings;
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

pub use crate::clustering::{
    load_clustering_tsv, read_clustering_tsv, save_clustering_tsv, write_clustering_tsv, ClusterRecord, Clustering,
    ClusteringJson,
};

/// A candidate antecedent survives when its score is strictly above this.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Matrix entry for a mention that has no antecedent in a cluster.
const FORBIDDEN: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMethod {
    Naive,
    Communities,
    Antecedent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub method: InferenceMethod,
    #[serde(default = "default_no_antecedent")]
    pub no_antecedent_score: f64,
    #[serde(default = "default_true")]
    pub seed_with_gold_train: bool,
}

fn default_no_antecedent() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            method: InferenceMethod::Antecedent,
            no_antecedent_score: default_no_antecedent(),
            seed_with_gold_train: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.no_antecedent_score > 0.0 && self.no_antecedent_score < 1.0) {
            return Err(Error::Config(format!("no_antecedent_score must be in (0, 1), got {}", self.no_antecedent_score)));
        }
        Ok(())
    }
}

fn check_graph<T: Scalar>(corpus: &Corpus, graph: &Graph<T>) -> Result<()> {
    if graph.num_nodes() != corpus.num_mentions() {
        return invalid(format!("graph has {} nodes but corpus has {} mentions", graph.num_nodes(), corpus.num_mentions()));
    }
    Ok(())
}

/// Each mention joins the cluster of its nearest earlier graph neighbor, or
/// starts a new one.
pub fn naive_cluster<T: Scalar>(corpus: &Corpus, graph: &Graph<T>, emb: &Embeddings<T>) -> Result<Clustering> {
    check_graph(corpus, graph)?;
    if emb.len() != corpus.num_mentions() {
        return invalid(format!("{} embeddings for {} mentions", emb.len(), corpus.num_mentions()));
    }
    let mut out = Clustering::new();
    for i in 0..corpus.num_mentions() {
        let nearest = graph
            .neighbors(i)
            .iter()
            .filter(|&&(j, _)| j < i)
            .map(|&(j, _)| (emb.distance(i, j), j))
            .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
        match nearest {
            Some((_, j)) => out.assign(i, out.get(j).expect("earlier mentions are clustered")),
            None => {
                out.assign_new(i);
            }
        }
    }
    Ok(out)
}

pub fn communities_to_clustering(partition: &Partition) -> Clustering {
    Clustering::from_labels(partition.labels())
}

/// Surviving antecedents of one mention grouped by cluster.
struct Candidates {
    mention: usize,
    /// cluster → (mean score, best score, best antecedent)
    by_cluster: BTreeMap<usize, (f64, f64, usize)>,
}

impl Candidates {
    fn best_cluster(&self) -> usize {
        let mut best: Option<(f64, usize, usize)> = None;
        for (&c, &(_, s, j)) in &self.by_cluster {
            // highest score, then the earliest antecedent
            if best.is_none_or(|(bs, bj, _)| s > bs || (s == bs && j < bj)) {
                best = Some((s, j, c));
            }
        }
        best.expect("non-empty").2
    }
}

/// Sequential antecedent clustering.
///
/// `targets[m]` marks the mentions to infer. With `seed_with_gold_train`,
/// the labelled non-target mentions start out in their gold clusters and
/// unlabelled non-targets are ignored; otherwise every mention is inferred
/// from a cold start. The result holds every clustered mention.
pub fn antecedent_cluster<T: Scalar>(
    corpus: &Corpus,
    targets: &[bool],
    graph: &Graph<T>,
    scorer: &dyn PairScorer,
    config: &InferenceConfig,
) -> Result<Clustering> {
    config.validate()?;
    check_graph(corpus, graph)?;
    if targets.len() != corpus.num_mentions() {
        return invalid(format!("{} target flags for {} mentions", targets.len(), corpus.num_mentions()));
    }
    let mut clustering = Clustering::new();
    let infer: Vec<bool> = if config.seed_with_gold_train {
        let mut seeds: BTreeMap<&str, usize> = BTreeMap::new();
        for m in corpus.mentions().filter(|m| !targets[m.mention_id]) {
            if let Some(g) = &m.gold_identity {
                match seeds.get(g.as_str()) {
                    Some(&c) => clustering.assign(m.mention_id, c),
                    None => {
                        let c = clustering.assign_new(m.mention_id);
                        seeds.insert(g, c);
                    }
                }
            }
        }
        targets.to_vec()
    } else {
        vec![true; targets.len()]
    };

    for doc in corpus.documents() {
        let todo: Vec<usize> = doc.mentions.iter().map(|m| m.mention_id).filter(|&m| infer[m]).collect();
        if todo.is_empty() {
            continue;
        }
        let mut cands = Vec::with_capacity(todo.len());
        for &i in &todo {
            let earlier: Vec<(usize, usize)> = graph
                .neighbors(i)
                .iter()
                .filter(|&&(j, _)| j < i)
                .filter_map(|&(j, _)| clustering.get(j).map(|c| (j, c)))
                .collect();
            let scores: Vec<f64> =
                earlier.par_iter().map(|&(j, _)| scorer.score_pair(i, j)).collect::<Result<_>>()?;
            let mut grouped: BTreeMap<usize, (f64, usize, f64, usize)> = BTreeMap::new();
            for (&(j, c), &s) in earlier.iter().zip(&scores) {
                if s > DECISION_THRESHOLD {
                    let e = grouped.entry(c).or_insert((0.0, 0, f64::NEG_INFINITY, j));
                    e.0 += s;
                    e.1 += 1;
                    if s > e.2 || (s == e.2 && j < e.3) {
                        e.2 = s;
                        e.3 = j;
                    }
                }
            }
            let by_cluster = grouped.into_iter().map(|(c, (sum, n, best, j))| (c, (sum / n as f64, best, j))).collect();
            cands.push(Candidates { mention: i, by_cluster });
        }

        let mut claims: BTreeMap<usize, usize> = BTreeMap::new();
        for c in &cands {
            for &cl in c.by_cluster.keys() {
                *claims.entry(cl).or_insert(0) += 1;
            }
        }
        let mut decided: BTreeMap<usize, Option<usize>> = BTreeMap::new();
        let mut conflicted = Vec::new();
        for c in &cands {
            if c.by_cluster.is_empty() {
                decided.insert(c.mention, None);
            } else if c.by_cluster.keys().all(|cl| claims[cl] == 1) {
                decided.insert(c.mention, Some(c.best_cluster()));
            } else {
                conflicted.push(c);
            }
        }

        if !conflicted.is_empty() {
            let taken: Vec<usize> = decided.values().flatten().copied().collect();
            let mut cols: Vec<usize> =
                conflicted.iter().flat_map(|c| c.by_cluster.keys().copied()).filter(|cl| !taken.contains(cl)).collect();
            cols.sort_unstable();
            cols.dedup();
            let width = cols.len() + conflicted.len();
            let mut data = Vec::with_capacity(conflicted.len() * width);
            for c in &conflicted {
                for cl in &cols {
                    data.push(c.by_cluster.get(cl).map_or(FORBIDDEN, |e| e.0));
                }
                data.extend(std::iter::repeat_n(config.no_antecedent_score, conflicted.len()));
            }
            let m = CostMatrix::new(conflicted.len(), width, data)?;
            for (r, col) in solve_max(&m)? {
                let mention = conflicted[r].mention;
                let choice = (col < cols.len()).then(|| cols[col]);
                debug_assert!(choice.is_none_or(|cl| conflicted[r].by_cluster.contains_key(&cl)));
                decided.insert(mention, choice);
            }
        }

        for (mention, choice) in decided {
            match choice {
                Some(cl) => clustering.assign(mention, cl),
                None => {
                    clustering.assign_new(mention);
                }
            }
        }
    }
    Ok(clustering)
}
