//! Pairwise antecedent classifier: pair sampling, the MLP, training and
//! pair scoring.

mod checkpoint;
mod model;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Mention};
use crate::embeddings::Embeddings;
use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

pub use checkpoint::{
    fingerprint, load_model, read_model, read_sidecar, save_model, sidecar_path, write_model, ModelSidecar, MODEL_MAGIC,
};
pub use model::{bce_loss, sample_masks, train, DropoutMasks, Mlp, TrainConfig, TrainReport, CLAMP};

/// Exact, case-sensitive surface equality.
pub fn surface_match(a: &Mention, b: &Mention) -> bool {
    a.surface == b.surface
}

/// A (mention, earlier candidate) pair with its gold label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairExample {
    pub mention_i: usize,
    pub mention_j: usize,
    pub surface_match: bool,
    pub label: bool,
}

impl PairExample {
    pub fn features<T: Scalar>(&self, emb: &Embeddings<T>) -> Vec<T> {
        pair_features(emb, self.mention_i, self.mention_j, self.surface_match)
    }
}

/// `[g_i ; g_j ; Φ]`, length `2·dim + 1`.
pub fn pair_features<T: Scalar>(emb: &Embeddings<T>, i: usize, j: usize, surface_match: bool) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * emb.dim() + 1);
    out.extend_from_slice(emb.row(i));
    out.extend_from_slice(emb.row(j));
    out.push(if surface_match { T::one() } else { T::zero() });
    out
}

fn mention_table(corpus: &Corpus) -> Vec<&Mention> {
    corpus.mentions().collect()
}

fn check_graph<T: Scalar>(corpus: &Corpus, graph: &Graph<T>) -> Result<()> {
    if graph.num_nodes() != corpus.num_mentions() {
        return invalid(format!("graph has {} nodes but corpus has {} mentions", graph.num_nodes(), corpus.num_mentions()));
    }
    Ok(())
}

/// Pairs of each labelled mention with its earlier labelled graph neighbors.
///
/// With `add_all_positives`, every earlier coreferent mention is added as a
/// positive even when the graph has no edge to it.
pub fn sample_pairs_network<T: Scalar>(corpus: &Corpus, graph: &Graph<T>, add_all_positives: bool) -> Result<Vec<PairExample>> {
    check_graph(corpus, graph)?;
    let ms = mention_table(corpus);
    let mut out = Vec::new();
    for m in &ms {
        let Some(gi) = &m.gold_identity else { continue };
        let i = m.mention_id;
        let mut seen = BTreeSet::new();
        for &(j, _) in graph.neighbors(i) {
            if j >= i {
                continue;
            }
            let Some(gj) = &ms[j].gold_identity else { continue };
            seen.insert(j);
            out.push(PairExample { mention_i: i, mention_j: j, surface_match: surface_match(m, ms[j]), label: gi == gj });
        }
        if add_all_positives {
            for &j in corpus.identity_index()[gi].range(..i) {
                if !seen.contains(&j) {
                    out.push(PairExample { mention_i: i, mention_j: j, surface_match: surface_match(m, ms[j]), label: true });
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

/// For each labelled mention, the `n` nearest earlier coreferent mentions
/// and, separately, the `n` nearest earlier non-coreferent ones.
pub fn sample_pairs_nearest<T: Scalar>(corpus: &Corpus, emb: &Embeddings<T>, n: usize) -> Result<Vec<PairExample>> {
    if emb.len() != corpus.num_mentions() {
        return invalid(format!("{} embeddings for {} mentions", emb.len(), corpus.num_mentions()));
    }
    let ms = mention_table(corpus);
    let mut out = Vec::new();
    for m in &ms {
        let Some(gi) = &m.gold_identity else { continue };
        let i = m.mention_id;
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (j, other) in ms.iter().enumerate().take(i) {
            let Some(gj) = &other.gold_identity else { continue };
            let d = emb.distance(i, j);
            if gi == gj { pos.push((d, j)) } else { neg.push((d, j)) }
        }
        for (list, label) in [(&mut pos, true), (&mut neg, false)] {
            list.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
            for &(_, j) in list.iter().take(n) {
                out.push(PairExample { mention_i: i, mention_j: j, surface_match: surface_match(m, ms[j]), label });
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Probability that mention `j` is an antecedent of mention `i`.
pub trait PairScorer: Sync {
    fn score_pair(&self, i: usize, j: usize) -> Result<f64>;
}

/// Scores pairs with a trained model over one corpus' embeddings.
pub struct ModelScorer<'a, T> {
    model: &'a Mlp<T>,
    emb: &'a Embeddings<T>,
    surfaces: Vec<&'a str>,
}

impl<'a, T: Scalar> ModelScorer<'a, T> {
    pub fn new(model: &'a Mlp<T>, emb: &'a Embeddings<T>, corpus: &'a Corpus) -> Result<Self> {
        if emb.len() != corpus.num_mentions() {
            return invalid(format!("{} embeddings for {} mentions", emb.len(), corpus.num_mentions()));
        }
        if model.input_dim() != 2 * emb.dim() + 1 {
            return invalid(format!("model expects {} features, embeddings give {}", model.input_dim(), 2 * emb.dim() + 1));
        }
        Ok(ModelScorer { model, emb, surfaces: corpus.surfaces() })
    }
}

impl<T: Scalar> PairScorer for ModelScorer<'_, T> {
    fn score_pair(&self, i: usize, j: usize) -> Result<f64> {
        let x = pair_features(self.emb, i, j, self.surfaces[i] == self.surfaces[j]);
        Ok(self.model.score(&x)?.as_f64())
    }
}

/// Perfect classifier: 1 for coreferent labelled pairs, 0 otherwise.
pub struct OracleScorer {
    labels: Vec<Option<String>>,
}

impl OracleScorer {
    pub fn new(corpus: &Corpus) -> Self {
        OracleScorer { labels: corpus.mentions().map(|m| m.gold_identity.clone()).collect() }
    }
}

impl PairScorer for OracleScorer {
    fn score_pair(&self, i: usize, j: usize) -> Result<f64> {
        Ok(match (&self.labels[i], &self.labels[j]) {
            (Some(a), Some(b)) if a == b => 1.0,
            _ => 0.0,
        })
    }
}
