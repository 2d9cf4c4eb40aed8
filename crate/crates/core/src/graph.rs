//! Weighted, undirected mention networks induced from embeddings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embeddings::Embeddings;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    pub weight: T,
}

/// Undirected graph with edges stored once as `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    num_nodes: usize,
    edges: Vec<Edge<T>>,
    adj: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> Graph<T> {
    pub fn empty(num_nodes: usize) -> Self {
        Graph { num_nodes, edges: Vec::new(), adj: vec![Vec::new(); num_nodes] }
    }

    /// Validates and canonicalizes an edge list. Each endpoint pair may
    /// appear once, in either orientation.
    pub fn from_edges(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for (a, b, w) in edges {
            if a == b {
                return invalid(format!("self-loop on node {a}"));
            }
            if a >= num_nodes || b >= num_nodes {
                return invalid(format!("edge ({a}, {b}) out of range for {num_nodes} nodes"));
            }
            if !w.is_finite() {
                return invalid(format!("edge ({a}, {b}) has non-finite weight"));
            }
            if map.insert((a.min(b), a.max(b)), w).is_some() {
                return invalid(format!("duplicate edge ({a}, {b})"));
            }
        }
        Ok(Self::from_canonical(num_nodes, map))
    }

    fn from_canonical(num_nodes: usize, map: BTreeMap<(usize, usize), T>) -> Self {
        let mut adj = vec![Vec::new(); num_nodes];
        let edges: Vec<Edge<T>> = map
            .into_iter()
            .map(|((i, j), weight)| {
                adj[i].push((j, weight));
                adj[j].push((i, weight));
                Edge { i, j, weight }
            })
            .collect();
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| n);
        }
        Graph { num_nodes, edges, adj }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    /// Neighbors of `i` with edge weights, ascending by node.
    pub fn neighbors(&self, i: usize) -> &[(usize, T)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<T> {
        self.adj[i].binary_search_by_key(&j, |&(n, _)| n).ok().map(|k| self.adj[i][k].1)
    }

    pub fn total_weight(&self) -> T {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMethod {
    Knn,
    SurfaceForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub method: GraphMethod,
    /// Neighbors per node (kNN only).
    #[serde(default = "default_k")]
    pub k: usize,
    /// Radius multiplier (surface form only).
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    /// Edges lighter than this are dropped after construction.
    #[serde(default)]
    pub threshold: Option<f64>,
}

fn default_k() -> usize {
    5
}

fn default_multiplier() -> f64 {
    1.0
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { method: GraphMethod::Knn, k: default_k(), multiplier: default_multiplier(), threshold: None }
    }
}

/// Builds the configured graph and applies the optional threshold.
pub fn build_graph<T: Scalar>(emb: &Embeddings<T>, corpus: &Corpus, config: &GraphConfig) -> Result<Graph<T>> {
    let g = match config.method {
        GraphMethod::Knn => build_knn(emb, config.k)?,
        GraphMethod::SurfaceForm => build_surface_form(emb, corpus, config.multiplier)?,
    };
    Ok(match config.threshold {
        Some(t) => threshold_edges(&g, T::of(t)),
        None => g,
    })
}

/// The `k` nearest other rows of `i` by cosine distance, ties to the lower id.
fn nearest<T: Scalar>(emb: &Embeddings<T>, i: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(T, usize)> = (0..emb.len()).filter(|&j| j != i).map(|j| (emb.distance(i, j), j)).collect();
    let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Links every node to its `k` nearest neighbors; the result is the
/// undirected union, so degrees can exceed `k`.
pub fn build_knn<T: Scalar>(emb: &Embeddings<T>, k: usize) -> Result<Graph<T>> {
    let n = emb.len();
    if k == 0 || k + 1 > n {
        return Err(Error::Config(format!("k = {k} is outside [1, {}]", n.saturating_sub(1))));
    }
    let lists: Vec<Vec<usize>> = (0..n).into_par_iter().map(|i| nearest(emb, i, k)).collect();
    let mut pairs = BTreeSet::new();
    for (i, list) in lists.iter().enumerate() {
        for &j in list {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    Ok(Graph::from_canonical(n, pairs.into_iter().map(|(i, j)| ((i, j), emb.similarity(i, j))).collect()))
}

/// Per-mention link radii for the surface-form heuristic.
///
/// A mention whose surface form occurs more than once gets the distance to
/// the furthest mention with the same form. Mentions with a unique form get
/// the mean radius of mentions whose form occurs exactly twice, or, if no
/// such form exists, of all mentions with a repeated form.
pub fn surface_radii<T: Scalar>(emb: &Embeddings<T>, corpus: &Corpus) -> Result<Vec<T>> {
    let n = corpus.num_mentions();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for m in corpus.mentions() {
        groups.entry(m.surface.as_str()).or_default().push(m.mention_id);
    }
    let mut radius: Vec<Option<T>> = vec![None; n];
    for members in groups.values().filter(|g| g.len() >= 2) {
        for &i in members {
            let r = members.iter().filter(|&&j| j != i).map(|&j| emb.distance(i, j)).fold(T::zero(), T::max);
            radius[i] = Some(r);
        }
    }
    let mean_over = |freq: &dyn Fn(usize) -> bool| -> Option<T> {
        let rs: Vec<T> = groups
            .values()
            .filter(|g| freq(g.len()))
            .flat_map(|g| g.iter().map(|&i| radius[i].unwrap()))
            .collect();
        (!rs.is_empty()).then(|| rs.iter().copied().sum::<T>() / T::from_usize(rs.len()).unwrap())
    };
    let has_unique = groups.values().any(|g| g.len() == 1);
    let fallback = if has_unique {
        match mean_over(&|f| f == 2).or_else(|| mean_over(&|f| f >= 2)) {
            Some(r) => r,
            None => {
                return Err(Error::RadiusFallback(
                    "every surface form occurs once, so there is no radius to estimate from".into(),
                ))
            }
        }
    } else {
        T::zero()
    };
    Ok(radius.into_iter().map(|r| r.unwrap_or(fallback)).collect())
}

/// Links mention `i` to every `j` with `distance(i, j) <= m * radius(i)`.
pub fn build_surface_form<T: Scalar>(emb: &Embeddings<T>, corpus: &Corpus, m: f64) -> Result<Graph<T>> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Config(format!("multiplier must be positive, got {m}")));
    }
    if emb.len() != corpus.num_mentions() {
        return invalid(format!("{} embeddings for {} mentions", emb.len(), corpus.num_mentions()));
    }
    let radii = surface_radii(emb, corpus)?;
    let m = T::of(m);
    let n = emb.len();
    let lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let reach = m * radii[i];
            (0..n).filter(|&j| j != i && emb.distance(i, j) <= reach).collect()
        })
        .collect();
    let mut pairs = BTreeSet::new();
    for (i, list) in lists.iter().enumerate() {
        for &j in list {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    Ok(Graph::from_canonical(n, pairs.into_iter().map(|(i, j)| ((i, j), emb.similarity(i, j))).collect()))
}

/// Keeps exactly the edges with `weight >= threshold`.
pub fn threshold_edges<T: Scalar>(graph: &Graph<T>, threshold: T) -> Graph<T> {
    let kept = graph.edges.iter().filter(|e| e.weight >= threshold).map(|e| ((e.i, e.j), e.weight)).collect();
    Graph::from_canonical(graph.num_nodes, kept)
}

/// Formats `x` like C's `%.{digits}g`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{:.*}", (digits as i32 - 1 - exp) as usize, x))
    }
}

/// Writes `nodes=<N>` followed by `i<TAB>j<TAB>weight` lines.
pub fn write_edge_list<T: Scalar, W: Write>(graph: &Graph<T>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "nodes={}", graph.num_nodes)?;
    for e in &graph.edges {
        writeln!(w, "{}\t{}\t{}", e.i, e.j, format_significant(e.weight.as_f64(), 9))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_edge_list<T: Scalar>(graph: &Graph<T>, path: impl AsRef<Path>) -> Result<()> {
    write_edge_list(graph, File::create(path)?)
}

pub fn read_edge_list<T: Scalar, R: Read>(reader: R) -> Result<Graph<T>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let num_nodes: usize = header
        .strip_prefix("nodes=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Parse { line: 1, message: format!("expected `nodes=<N>`, got {header:?}") })?;
    let mut edges = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse { line: idx + 2, message: format!("expected `i<TAB>j<TAB>weight`, got {line:?}") };
        let mut parts = line.split('\t');
        let i: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let j: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let w: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        edges.push((i, j, T::of(w)));
    }
    Graph::from_edges(num_nodes, edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph<f64>> {
    read_edge_list(File::open(path)?)
}
