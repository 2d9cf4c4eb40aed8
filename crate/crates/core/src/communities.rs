//! Unsupervised cluster inference on mention graphs.
//!
//! Edge weights are clamped to `max(w, 0)` before any community computation;
//! modularity is not defined for negative weights.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// Minimum improvement for a move to count.
const GAIN_TOLERANCE: f64 = 1e-12;
/// Randomness of the refinement step.
const REFINE_THETA: f64 = 0.01;

/// Node → community label, labels dense in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    assignment: Vec<usize>,
}

impl Partition {
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap = std::collections::BTreeMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Partition { assignment }
    }

    pub fn singletons(n: usize) -> Self {
        Partition { assignment: (0..n).collect() }
    }

    pub fn all_in_one(n: usize) -> Self {
        Partition { assignment: vec![0; n] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_communities(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    /// Members of every community, ascending.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_communities()];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c].push(node);
        }
        out
    }
}

pub fn write_partition<W: Write>(partition: &Partition, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for (node, c) in partition.assignment.iter().enumerate() {
        writeln!(w, "{node}\t{c}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_partition(partition: &Partition, path: impl AsRef<Path>) -> Result<()> {
    write_partition(partition, File::create(path)?)
}

/// Reads `node<TAB>community` lines; nodes must be exactly `0..n`.
pub fn read_partition<R: Read>(reader: R) -> Result<Partition> {
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = line
            .split_once('\t')
            .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
        match parsed {
            Some(p) => pairs.push(p),
            None => return Err(Error::Parse { line: idx + 1, message: format!("expected `node<TAB>community`, got {line:?}") }),
        }
    }
    pairs.sort_unstable();
    if pairs.iter().enumerate().any(|(i, &(n, _))| n != i) {
        return invalid("partition nodes must be exactly 0..n, each once");
    }
    Ok(Partition::from_labels(&pairs.into_iter().map(|(_, c)| c).collect::<Vec<_>>()))
}

pub fn load_partition(path: impl AsRef<Path>) -> Result<Partition> {
    read_partition(File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    LabelPropagation,
    Leiden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Label propagation votes with edge weights (`true`) or edge counts.
    #[serde(default = "default_weighted")]
    pub weighted: bool,
}

fn default_resolution() -> f64 {
    1.0
}
fn default_max_iterations() -> usize {
    100
}
fn default_weighted() -> bool {
    true
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig {
            algorithm: Algorithm::Leiden,
            resolution: default_resolution(),
            seed: 0,
            max_iterations: default_max_iterations(),
            weighted: default_weighted(),
        }
    }
}

impl CommunityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::Config(format!("resolution must be positive, got {}", self.resolution)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Runs the configured algorithm.
pub fn detect<T: Scalar>(graph: &Graph<T>, config: &CommunityConfig) -> Result<Partition> {
    config.validate()?;
    Ok(match config.algorithm {
        Algorithm::LabelPropagation => label_propagation(graph, config),
        Algorithm::Leiden => leiden(graph, config),
    })
}

/// Weighted graph with clamped weights and optional self-loops, the working
/// representation for both optimizers and for aggregated Leiden levels.
#[derive(Debug, Clone)]
struct Network<T> {
    adj: Vec<Vec<(usize, T)>>,
    self_loops: Vec<T>,
    degree: Vec<T>,
    /// Twice the total edge weight.
    two_m: T,
}

impl<T: Scalar> Network<T> {
    fn from_graph(graph: &Graph<T>) -> Self {
        let n = graph.num_nodes();
        let mut adj = vec![Vec::new(); n];
        for e in graph.edges() {
            let w = e.weight.max(T::zero());
            if w > T::zero() {
                adj[e.i].push((e.j, w));
                adj[e.j].push((e.i, w));
            }
        }
        for l in &mut adj {
            l.sort_by_key(|&(n, _)| n);
        }
        Self::with_loops(adj, vec![T::zero(); n])
    }

    fn with_loops(adj: Vec<Vec<(usize, T)>>, self_loops: Vec<T>) -> Self {
        let two = T::one() + T::one();
        let degree: Vec<T> =
            adj.iter().zip(&self_loops).map(|(l, s)| l.iter().map(|&(_, w)| w).sum::<T>() + two * *s).collect();
        let two_m = degree.iter().copied().sum();
        Network { adj, self_loops, degree, two_m }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, labels: &[usize], gamma: T) -> T {
        let c = labels.iter().max().map_or(0, |m| m + 1);
        let mut internal = vec![T::zero(); c];
        let mut total = vec![T::zero(); c];
        for v in 0..self.len() {
            let cv = labels[v];
            total[cv] += self.degree[v];
            internal[cv] += self.self_loops[v];
            for &(u, w) in &self.adj[v] {
                if u > v && labels[u] == cv {
                    internal[cv] += w;
                }
            }
        }
        let m = self.two_m / (T::one() + T::one());
        internal.iter().zip(&total).map(|(&l, &d)| l / m - gamma * (d / self.two_m) * (d / self.two_m)).sum()
    }
}

/// Weighted modularity of `partition` at resolution `gamma`.
pub fn modularity<T: Scalar>(graph: &Graph<T>, partition: &Partition, gamma: T) -> Result<T> {
    if partition.len() != graph.num_nodes() {
        return invalid(format!("partition covers {} nodes, graph has {}", partition.len(), graph.num_nodes()));
    }
    let net = Network::from_graph(graph);
    if !(net.two_m > T::zero()) {
        return Err(Error::UndefinedModularity("graph has no positive edge weight".into()));
    }
    Ok(net.modularity(partition.labels(), gamma))
}

/// Asynchronous label propagation in seeded random sweep order.
///
/// A node keeps its label while that label is among the heaviest neighbor
/// labels; otherwise it takes one of the heaviest, chosen uniformly at
/// random. Stops after a sweep with no change or `max_iterations` sweeps.
pub fn label_propagation<T: Scalar>(graph: &Graph<T>, config: &CommunityConfig) -> Partition {
    label_propagation_traced(graph, config).0
}

/// Label propagation that also reports the number of sweeps run.
pub fn label_propagation_traced<T: Scalar>(graph: &Graph<T>, config: &CommunityConfig) -> (Partition, usize) {
    let net = Network::from_graph(graph);
    let n = net.len();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut votes = vec![T::zero(); n];
    let mut touched: Vec<usize> = Vec::new();
    let mut sweeps = 0;
    while sweeps < config.max_iterations {
        sweeps += 1;
        order.shuffle(&mut rng);
        let mut changed = false;
        for &v in &order {
            if net.adj[v].is_empty() {
                continue;
            }
            for &(u, w) in &net.adj[v] {
                let l = labels[u];
                if votes[l] == T::zero() {
                    touched.push(l);
                }
                votes[l] += if config.weighted { w } else { T::one() };
            }
            touched.sort_unstable();
            let best = touched.iter().map(|&l| votes[l]).fold(T::zero(), T::max);
            let tol = T::of(GAIN_TOLERANCE) * best.max(T::one());
            let winners: Vec<usize> = touched.iter().copied().filter(|&l| votes[l] >= best - tol).collect();
            for &l in &touched {
                votes[l] = T::zero();
            }
            touched.clear();
            if !winners.contains(&labels[v]) {
                labels[v] = winners[rng.random_range(0..winners.len())];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (Partition::from_labels(&labels), sweeps)
}

/// Renumbers labels to `0..c` and returns `c`.
fn renumber(labels: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; labels.len().max(labels.iter().max().map_or(0, |m| m + 1))];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    next
}

struct Optimizer<'a, T> {
    gamma: T,
    two_m: T,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Optimizer<'_, T> {
    fn tol(&self) -> T {
        T::of(GAIN_TOLERANCE)
    }

    /// Queue-based local moving. Returns whether any node changed community.
    fn move_nodes(&mut self, net: &Network<T>, comm: &mut [usize]) -> bool {
        let n = net.len();
        let mut total = vec![T::zero(); n];
        let mut size = vec![0usize; n];
        for v in 0..n {
            total[comm[v]] += net.degree[v];
            size[comm[v]] += 1;
        }
        let mut empty: Vec<usize> = (0..n).rev().filter(|&c| size[c] == 0).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(self.rng);
        let mut queue: VecDeque<usize> = order.into_iter().collect();
        let mut queued = vec![true; n];
        let mut w_to = vec![T::zero(); n];
        let mut touched = Vec::new();
        let mut changed = false;

        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            let cur = comm[v];
            let kv = net.degree[v];
            for &(u, w) in &net.adj[v] {
                let c = comm[u];
                if w_to[c] == T::zero() {
                    touched.push(c);
                }
                w_to[c] += w;
            }
            total[cur] -= kv;
            size[cur] -= 1;
            let scale = self.gamma * kv / self.two_m;
            let mut best = cur;
            let mut best_gain = w_to[cur] - scale * total[cur];
            for &c in &touched {
                let gain = w_to[c] - scale * total[c];
                if gain > best_gain + self.tol() {
                    best = c;
                    best_gain = gain;
                }
            }
            if size[cur] > 0 && T::zero() > best_gain + self.tol() {
                if let Some(&e) = empty.last() {
                    best = e;
                }
            }
            for &c in &touched {
                w_to[c] = T::zero();
            }
            touched.clear();

            if size[cur] == 0 && best != cur {
                empty.push(cur);
            }
            if empty.last() == Some(&best) {
                empty.pop();
            }
            total[best] += kv;
            size[best] += 1;
            comm[v] = best;
            if best != cur {
                changed = true;
                for &(u, _) in &net.adj[v] {
                    if !queued[u] && comm[u] != best {
                        queued[u] = true;
                        queue.push_back(u);
                    }
                }
            }
        }
        changed
    }

    /// Splits every community of `comm` into well-connected subcommunities
    /// grown by merging singletons along edges.
    fn refine(&mut self, net: &Network<T>, comm: &[usize]) -> Vec<usize> {
        let n = net.len();
        let mut comm_total = vec![T::zero(); n];
        for v in 0..n {
            comm_total[comm[v]] += net.degree[v];
        }
        let mut refined: Vec<usize> = (0..n).collect();
        let mut r_total: Vec<T> = net.degree.clone();
        let mut r_size = vec![1usize; n];
        // weight from each refined community to the rest of its community
        let mut r_ext: Vec<T> = (0..n)
            .map(|v| net.adj[v].iter().filter(|&&(u, _)| comm[u] == comm[v]).map(|&(_, w)| w).sum())
            .collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(self.rng);
        let mut w_to = vec![T::zero(); n];
        let mut touched = Vec::new();
        for v in order {
            if r_size[refined[v]] != 1 {
                continue;
            }
            let c = comm[v];
            let kv = net.degree[v];
            let v_ext = r_ext[refined[v]];
            if v_ext < self.gamma * kv * (comm_total[c] - kv) / self.two_m {
                continue;
            }
            for &(u, w) in &net.adj[v] {
                if comm[u] == c && u != v {
                    let t = refined[u];
                    if w_to[t] == T::zero() {
                        touched.push(t);
                    }
                    w_to[t] += w;
                }
            }
            let own = refined[v];
            let mut cands: Vec<(usize, T)> = vec![(own, T::zero())];
            for &t in &touched {
                let well_connected =
                    r_ext[t] >= self.gamma * r_total[t] * (comm_total[c] - r_total[t]) / self.two_m;
                let gain = w_to[t] - self.gamma * kv * r_total[t] / self.two_m;
                if well_connected && gain >= T::zero() {
                    cands.push((t, gain));
                }
            }
            let max_gain = cands.iter().map(|&(_, g)| g).fold(T::zero(), T::max);
            let theta = T::of(REFINE_THETA);
            let weights: Vec<f64> = cands.iter().map(|&(_, g)| ((g - max_gain) / theta).exp().as_f64()).collect();
            let sum: f64 = weights.iter().sum();
            let mut pick = self.rng.random::<f64>() * sum;
            let mut chosen = cands.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if pick < *w {
                    chosen = i;
                    break;
                }
                pick -= w;
            }
            let (target, _) = cands[chosen];
            if target != own {
                let joint = w_to[target];
                refined[v] = target;
                r_total[target] += kv;
                r_size[target] += 1;
                r_ext[target] = r_ext[target] + v_ext - (T::one() + T::one()) * joint;
                r_size[own] = 0;
            }
            for &t in &touched {
                w_to[t] = T::zero();
            }
            touched.clear();
        }
        renumber(&mut refined);
        refined
    }
}

/// Collapses each group of `groups` (dense labels) into one node.
fn aggregate<T: Scalar>(net: &Network<T>, groups: &[usize], count: usize) -> Network<T> {
    let mut maps: Vec<std::collections::BTreeMap<usize, T>> = vec![Default::default(); count];
    let mut loops = vec![T::zero(); count];
    for v in 0..net.len() {
        let gv = groups[v];
        loops[gv] += net.self_loops[v];
        for &(u, w) in &net.adj[v] {
            let gu = groups[u];
            if gu == gv {
                if u > v {
                    loops[gv] += w;
                }
            } else {
                *maps[gv].entry(gu).or_insert(T::zero()) += w;
            }
        }
    }
    Network::with_loops(maps.into_iter().map(|m| m.into_iter().collect()).collect(), loops)
}

/// One full Leiden run (move, refine, aggregate until stable) from an
/// initial labelling of the base network.
fn leiden_run<T: Scalar>(base: &Network<T>, init: &[usize], opt: &mut Optimizer<'_, T>) -> Vec<usize> {
    let mut net = base.clone();
    let mut comm = init.to_vec();
    renumber(&mut comm);
    let mut membership: Vec<usize> = (0..base.len()).collect();
    loop {
        opt.move_nodes(&net, &mut comm);
        let communities = renumber(&mut comm);
        if communities == net.len() {
            break;
        }
        let mut groups = opt.refine(&net, &comm);
        let mut count = groups.iter().max().map_or(0, |m| m + 1);
        if count == net.len() {
            groups = comm.clone();
            count = communities;
        }
        let mut next_comm = vec![0; count];
        for v in 0..net.len() {
            next_comm[groups[v]] = comm[v];
        }
        for m in membership.iter_mut() {
            *m = groups[*m];
        }
        net = aggregate(&net, &groups, count);
        comm = next_comm;
    }
    let mut labels: Vec<usize> = membership.iter().map(|&m| comm[m]).collect();
    renumber(&mut labels);
    labels
}

/// Connected components of the positive-weight network, as labels.
fn components<T: Scalar>(net: &Network<T>, within: Option<&[usize]>) -> Vec<usize> {
    let n = net.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &(u, _) in &net.adj[v] {
                if label[u] == usize::MAX && within.is_none_or(|c| c[u] == c[s]) {
                    label[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    label
}

/// Leiden optimization of modularity. Every returned community induces a
/// connected subgraph.
pub fn leiden<T: Scalar>(graph: &Graph<T>, config: &CommunityConfig) -> Partition {
    leiden_traced(graph, config).0
}

/// Leiden plus the modularity reached after each outer iteration.
pub fn leiden_traced<T: Scalar>(graph: &Graph<T>, config: &CommunityConfig) -> (Partition, Vec<T>) {
    let net = Network::from_graph(graph);
    let n = net.len();
    if !(net.two_m > T::zero()) {
        return (Partition::singletons(n), Vec::new());
    }
    let gamma = T::of(config.resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer { gamma, two_m: net.two_m, rng: &mut rng };

    let mut labels: Vec<usize> = (0..n).collect();
    let mut quality = net.modularity(&labels, gamma);
    let mut trace = Vec::new();
    for _ in 0..config.max_iterations {
        let next = leiden_run(&net, &labels, &mut opt);
        let q = net.modularity(&next, gamma);
        if q < quality {
            break;
        }
        let gained = q - quality > T::of(GAIN_TOLERANCE);
        labels = next;
        quality = q;
        trace.push(q);
        if !gained {
            break;
        }
    }

    // splitting a disconnected community never lowers modularity
    let mut split = components(&net, Some(&labels));
    renumber(&mut split);
    let comps = components(&net, None);
    let (q_split, q_comps) = (net.modularity(&split, gamma), net.modularity(&comps, gamma));
    let best = if q_comps > q_split { comps } else { split };
    (Partition::from_labels(&best), trace)
}

/// Random graph with planted blocks; returns the graph and block labels.
pub fn planted_partition(block_sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> (Graph<f64>, Vec<usize>) {
    let labels: Vec<usize> = block_sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    (Graph::from_edges(n, edges).expect("generated edges are valid"), labels)
}
