//! Documents, mentions and gold identities.
//!
//! A [`Corpus`] is immutable once built. Documents are sorted by their
//! [`OrderKey`] and mention ids are assigned densely in document order, then
//! position order, so "earlier" always means "smaller mention id".

mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use split::{apportion, split, Split, SplitSpec, SubCorpus};
pub use synth::{generate_synthetic, SynthConfig, SyntheticCorpus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub mention_id: usize,
    pub doc_id: u64,
    pub position_in_doc: usize,
    pub surface: String,
    /// `None` marks an ambiguous or unannotated mention.
    pub gold_identity: Option<String>,
}

/// Document sort key: a year or sequence number, then a string tie-break
/// such as a DOI.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderKey {
    pub primary: i64,
    pub secondary: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: u64,
    pub order: OrderKey,
    pub metadata: BTreeMap<String, String>,
    pub mentions: Vec<Mention>,
}

/// One line of the JSONL corpus format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: u64,
    pub order: (i64, String),
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub mentions: Vec<MentionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub surface: String,
    pub gold: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    identity_index: BTreeMap<String, BTreeSet<usize>>,
    num_mentions: usize,
}

impl Corpus {
    /// Builds a corpus from unordered records.
    ///
    /// Rejects duplicate doc ids (which would make `(doc_id, position)`
    /// ambiguous), identical order keys, and empty surface forms.
    pub fn from_records(records: Vec<DocumentRecord>) -> Result<Self> {
        let mut records = records;
        records.sort_by(|a, b| a.order.cmp(&b.order).then(a.doc_id.cmp(&b.doc_id)));

        let mut seen_ids = BTreeSet::new();
        for rec in &records {
            if !seen_ids.insert(rec.doc_id) {
                return invalid(format!("duplicate (doc_id, position) pairs: doc_id {} appears twice", rec.doc_id));
            }
        }
        for pair in records.windows(2) {
            if pair[0].order == pair[1].order {
                return invalid(format!(
                    "documents {} and {} share order key ({}, {:?}); a distinct secondary key is required",
                    pair[0].doc_id, pair[1].doc_id, pair[0].order.0, pair[0].order.1
                ));
            }
        }

        let mut documents = Vec::with_capacity(records.len());
        let mut identity_index: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        let mut next_id = 0usize;
        for rec in records {
            let mut mentions = Vec::with_capacity(rec.mentions.len());
            for (position, m) in rec.mentions.into_iter().enumerate() {
                if m.surface.is_empty() {
                    return invalid(format!("doc {} mention {position} has an empty surface form", rec.doc_id));
                }
                if let Some(g) = &m.gold {
                    identity_index.entry(g.clone()).or_default().insert(next_id);
                }
                mentions.push(Mention {
                    mention_id: next_id,
                    doc_id: rec.doc_id,
                    position_in_doc: position,
                    surface: m.surface,
                    gold_identity: m.gold,
                });
                next_id += 1;
            }
            documents.push(Document {
                doc_id: rec.doc_id,
                order: OrderKey { primary: rec.order.0, secondary: rec.order.1 },
                metadata: rec.metadata,
                mentions,
            });
        }
        Ok(Corpus { documents, identity_index, num_mentions: next_id })
    }

    pub fn to_records(&self) -> Vec<DocumentRecord> {
        self.documents
            .iter()
            .map(|d| DocumentRecord {
                doc_id: d.doc_id,
                order: (d.order.primary, d.order.secondary.clone()),
                metadata: d.metadata.clone(),
                mentions: d
                    .mentions
                    .iter()
                    .map(|m| MentionRecord { surface: m.surface.clone(), gold: m.gold_identity.clone() })
                    .collect(),
            })
            .collect()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn num_mentions(&self) -> usize {
        self.num_mentions
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Mentions in corpus order; the n-th item has mention id n.
    pub fn mentions(&self) -> impl Iterator<Item = &Mention> + '_ {
        self.documents.iter().flat_map(|d| d.mentions.iter())
    }

    pub fn identity_index(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.identity_index
    }

    /// Gold identity per mention id.
    pub fn gold_labels(&self) -> Vec<Option<&str>> {
        self.mentions().map(|m| m.gold_identity.as_deref()).collect()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.mentions().map(|m| m.surface.as_str()).collect()
    }

    /// Document index (into [`Corpus::documents`]) of every mention.
    pub fn doc_index_of_mentions(&self) -> Vec<usize> {
        self.documents
            .iter()
            .enumerate()
            .flat_map(|(di, d)| std::iter::repeat_n(di, d.mentions.len()))
            .collect()
    }

    /// Restricts the corpus to the documents at `doc_indices`, keeping corpus
    /// order and re-densifying mention ids.
    pub fn subset(&self, doc_indices: &[usize]) -> SubCorpus {
        let mut picked: Vec<usize> = doc_indices.to_vec();
        picked.sort_unstable();
        picked.dedup();
        let mut original_ids = Vec::new();
        let mut records = Vec::with_capacity(picked.len());
        for &di in &picked {
            let d = &self.documents[di];
            original_ids.extend(d.mentions.iter().map(|m| m.mention_id));
            records.push(DocumentRecord {
                doc_id: d.doc_id,
                order: (d.order.primary, d.order.secondary.clone()),
                metadata: d.metadata.clone(),
                mentions: d
                    .mentions
                    .iter()
                    .map(|m| MentionRecord { surface: m.surface.clone(), gold: m.gold_identity.clone() })
                    .collect(),
            });
        }
        let corpus = Corpus::from_records(records).expect("a subset of a valid corpus is valid");
        SubCorpus { corpus, original_ids, doc_indices: picked }
    }

    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for rec in self.to_records() {
            serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Validation(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }
}

/// Reads a JSONL corpus, one document object per non-blank line.
pub fn read_corpus<R: Read>(reader: R) -> Result<Corpus> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        records.push(rec);
    }
    Corpus::from_records(records)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus(File::open(path)?)
}

/// Number of gold identities for each cluster size. Ambiguous mentions are
/// not counted.
pub fn frequency_histogram(corpus: &Corpus) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for members in corpus.identity_index.values() {
        *hist.entry(members.len()).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(doc_id: u64, year: i64, doi: &str, mentions: &[(&str, Option<&str>)]) -> DocumentRecord {
        DocumentRecord {
            doc_id,
            order: (year, doi.to_string()),
            metadata: BTreeMap::new(),
            mentions: mentions
                .iter()
                .map(|(s, g)| MentionRecord { surface: s.to_string(), gold: g.map(str::to_string) })
                .collect(),
        }
    }

    #[test]
    fn two_lines_three_mentions_each() {
        let text = r#"{"doc_id": 1, "order": [2001, "a"], "metadata": {}, "mentions": [{"surface": "A", "gold": "x"}, {"surface": "B", "gold": null}, {"surface": "C", "gold": "y"}]}
{"doc_id": 2, "order": [2002, "b"], "metadata": {"title": "t"}, "mentions": [{"surface": "D", "gold": "x"}, {"surface": "E", "gold": "z"}, {"surface": "F", "gold": null}]}
"#;
        let corpus = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(corpus.num_mentions(), 6);
        let ids: Vec<usize> = corpus.mentions().map(|m| m.mention_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5]);
        let surf: Vec<&str> = corpus.surfaces();
        assert_eq!(surf, vec!["A", "B", "C", "D", "E", "F"]);
        assert_eq!(corpus.identity_index()["x"], BTreeSet::from([0, 3]));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let corpus = read_corpus("".as_bytes()).unwrap();
        assert_eq!(corpus.num_documents(), 0);
        assert_eq!(corpus.num_mentions(), 0);
    }

    #[test]
    fn documents_sorted_by_year_then_secondary() {
        let records = vec![
            rec(10, 2003, "10.1/a", &[("late", None)]),
            rec(11, 2001, "10.1/z", &[("early", None)]),
            rec(12, 2001, "10.1/b", &[("earliest", None)]),
        ];
        // oracle: sort the keys directly
        let mut keys: Vec<(i64, String, u64)> = records.iter().map(|r| (r.order.0, r.order.1.clone(), r.doc_id)).collect();
        keys.sort();
        let corpus = Corpus::from_records(records).unwrap();
        let got: Vec<u64> = corpus.documents().iter().map(|d| d.doc_id).collect();
        assert_eq!(got, keys.iter().map(|k| k.2).collect::<Vec<_>>());
        assert_eq!(corpus.mentions().next().unwrap().surface, "earliest");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"doc_id\": 1, \"order\": [1, \"a\"], \"mentions\": []}\n{oops\n";
        match read_corpus(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let records = vec![rec(1, 2000, "a", &[("A", None)]), rec(1, 2001, "b", &[("B", None)])];
        assert!(matches!(Corpus::from_records(records), Err(Error::Validation(_))));
    }

    #[test]
    fn tied_order_keys_rejected() {
        let records = vec![rec(1, 2000, "", &[("A", None)]), rec(2, 2000, "", &[("B", None)])];
        assert!(matches!(Corpus::from_records(records), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_surface_rejected() {
        let records = vec![rec(1, 2000, "a", &[("", None)])];
        assert!(Corpus::from_records(records).is_err());
    }

    #[test]
    fn histogram_counts_identities_by_size() {
        let records = vec![
            rec(1, 1, "a", &[("x1", Some("x")), ("y1", Some("y")), ("q", None)]),
            rec(2, 2, "b", &[("x2", Some("x"))]),
            rec(3, 3, "c", &[("x3", Some("x")), ("q", None)]),
        ];
        let corpus = Corpus::from_records(records).unwrap();
        assert_eq!(frequency_histogram(&corpus), BTreeMap::from([(3, 1), (1, 1)]));
    }

    #[test]
    fn histogram_without_annotations_is_empty() {
        let corpus = Corpus::from_records(vec![rec(1, 1, "a", &[("p", None), ("q", None)])]).unwrap();
        assert!(frequency_histogram(&corpus).is_empty());
    }

    #[test]
    fn subset_keeps_order_and_maps_ids() {
        let records = vec![
            rec(1, 1, "a", &[("a", Some("x")), ("b", None)]),
            rec(2, 2, "b", &[("c", Some("x"))]),
            rec(3, 3, "c", &[("d", None), ("e", Some("y"))]),
        ];
        let corpus = Corpus::from_records(records).unwrap();
        let sub = corpus.subset(&[2, 0]);
        assert_eq!(sub.original_ids, vec![0, 1, 3, 4]);
        assert_eq!(sub.corpus.surfaces(), vec!["a", "b", "d", "e"]);
        assert_eq!(sub.corpus.identity_index()["y"], BTreeSet::from([3]));
    }
}
