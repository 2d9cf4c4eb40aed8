use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// A (possibly partial) partition of mention ids into clusters with dense ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    assignment: BTreeMap<usize, usize>,
    next_cluster_id: usize,
}

impl Clustering {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every mention `i` in `labels[i]`, ids densified by first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        Self::from_pairs(labels.iter().copied().enumerate())
    }

    /// `(mention, label)` pairs; labels are arbitrary and get densified in
    /// order of ascending mention id.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let sorted: BTreeMap<usize, usize> = pairs.into_iter().collect();
        let mut remap = BTreeMap::new();
        let mut out = Clustering::new();
        for (m, l) in sorted {
            let id = *remap.entry(l).or_insert_with(|| {
                out.next_cluster_id += 1;
                out.next_cluster_id - 1
            });
            out.assignment.insert(m, id);
        }
        out
    }

    pub fn from_clusters(clusters: &[Vec<usize>]) -> Self {
        Self::from_pairs(clusters.iter().enumerate().flat_map(|(c, ms)| ms.iter().map(move |&m| (m, c))))
    }

    /// Gold identities as a clustering; ambiguous mentions are left out.
    pub fn gold_from_corpus(corpus: &Corpus) -> Self {
        let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut out = Clustering::new();
        for m in corpus.mentions() {
            if let Some(g) = &m.gold_identity {
                let id = *ids.entry(g.as_str()).or_insert_with(|| {
                    out.next_cluster_id += 1;
                    out.next_cluster_id - 1
                });
                out.assignment.insert(m.mention_id, id);
            }
        }
        out
    }

    /// Opens a fresh cluster for `mention` and returns its id.
    pub fn assign_new(&mut self, mention: usize) -> usize {
        let id = self.next_cluster_id;
        self.next_cluster_id += 1;
        self.assignment.insert(mention, id);
        id
    }

    /// Puts `mention` into the existing cluster `cluster`.
    pub fn assign(&mut self, mention: usize, cluster: usize) {
        assert!(cluster < self.next_cluster_id, "cluster {cluster} does not exist");
        self.assignment.insert(mention, cluster);
    }

    pub fn get(&self, mention: usize) -> Option<usize> {
        self.assignment.get(&mention).copied()
    }

    pub fn contains(&self, mention: usize) -> bool {
        self.assignment.contains_key(&mention)
    }

    /// Number of clustered mentions.
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn next_cluster_id(&self) -> usize {
        self.next_cluster_id
    }

    /// `(mention, cluster)` in ascending mention order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignment.iter().map(|(&m, &c)| (m, c))
    }

    /// Non-empty clusters, each sorted, ordered by smallest member.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut by_id: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (m, c) in self.iter() {
            by_id.entry(c).or_default().push(m);
        }
        let mut out: Vec<Vec<usize>> = by_id.into_values().collect();
        out.sort_by_key(|c| c[0]);
        out
    }

    /// Keeps mentions satisfying `keep`, re-densifying cluster ids.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self::from_pairs(self.iter().filter(|&(m, _)| keep(m)))
    }

    /// Same clusters with ids renumbered by first mention.
    pub fn canonical(&self) -> Self {
        Self::from_pairs(self.iter())
    }

    /// Maps mention ids through `f` (e.g. back to a parent corpus).
    pub fn map_mentions(&self, f: impl Fn(usize) -> usize) -> Self {
        Self::from_pairs(self.iter().map(|(m, c)| (f(m), c)))
    }
}

pub fn write_clustering_tsv<W: Write>(clustering: &Clustering, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for (m, c) in clustering.iter() {
        writeln!(w, "{m}\t{c}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_clustering_tsv(clustering: &Clustering, path: impl AsRef<Path>) -> Result<()> {
    write_clustering_tsv(clustering, File::create(path)?)
}

pub fn read_clustering_tsv<R: Read>(reader: R) -> Result<Clustering> {
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
            None => {
                return Err(Error::Parse { line: idx + 1, message: format!("expected `mention<TAB>cluster`, got {line:?}") })
            }
        }
    }
    Ok(Clustering::from_pairs(pairs))
}

pub fn load_clustering_tsv(path: impl AsRef<Path>) -> Result<Clustering> {
    read_clustering_tsv(File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster_id: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusteringJson {
    pub clusters: Vec<ClusterRecord>,
}

impl From<&Clustering> for ClusteringJson {
    fn from(c: &Clustering) -> Self {
        let mut by_id: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (m, id) in c.iter() {
            by_id.entry(id).or_default().push(m);
        }
        ClusteringJson {
            clusters: by_id.into_iter().map(|(cluster_id, members)| ClusterRecord { cluster_id, members }).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_densified() {
        let c = Clustering::from_labels(&[7, 7, 3, 9, 3]);
        assert_eq!(c.clusters(), vec![vec![0, 1], vec![2, 4], vec![3]]);
        assert_eq!(c.next_cluster_id(), 3);
    }

    #[test]
    fn tsv_round_trip() {
        let c = Clustering::from_pairs([(4, 1), (2, 0), (9, 1)]);
        let mut buf = Vec::new();
        write_clustering_tsv(&c, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "2\t0\n4\t1\n9\t1\n");
        assert_eq!(read_clustering_tsv(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn json_lists_members() {
        let c = Clustering::from_labels(&[0, 1, 0]);
        let j = ClusteringJson::from(&c);
        assert_eq!(serde_json::to_string(&j).unwrap(), r#"{"clusters":[{"cluster_id":0,"members":[0,2]},{"cluster_id":1,"members":[1]}]}"#);
    }

    #[test]
    fn restrict_drops_and_renumbers() {
        let c = Clustering::from_labels(&[0, 1, 1, 2]);
        let r = c.restrict(|m| m != 0);
        assert_eq!(r.clusters(), vec![vec![1, 2], vec![3]]);
        assert_eq!(r.get(1), Some(0));
    }
}
