use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

/// Document-level train/dev/test fractions plus the shuffle seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { fractions: [0.6, 0.2, 0.2], seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Config(format!("split fractions must be nonnegative, got {:?}", self.fractions)));
        }
        let total: f64 = self.fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// A corpus restricted to some documents of a parent corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SubCorpus {
    pub corpus: Corpus,
    /// `original_ids[local_id]` is the mention id in the parent corpus.
    pub original_ids: Vec<usize>,
    /// Parent document indices, ascending.
    pub doc_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: SubCorpus,
    pub dev: SubCorpus,
    pub test: SubCorpus,
}

/// Largest-remainder apportionment of `n` items over `fractions`.
///
/// Remainders equal to within 1e-9 are resolved in favour of the later part.
pub fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<(i64, usize)> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (((q - q.floor()) * 1e9).round() as i64, i))
        .collect();
    order.sort_by(|a, b| b.cmp(a));
    for &(_, i) in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Seeded document-level split. Each part keeps corpus order.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = corpus.num_documents();
    let counts = apportion(n, &spec.fractions);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (train, rest) = order.split_at(counts[0]);
    let (dev, test) = rest.split_at(counts[1]);
    Ok(Split { train: corpus.subset(train), dev: corpus.subset(dev), test: corpus.subset(test) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocumentRecord, MentionRecord};
    use std::collections::BTreeMap;

    fn corpus_of(n: usize) -> Corpus {
        let records = (0..n)
            .map(|i| DocumentRecord {
                doc_id: i as u64,
                order: (i as i64, String::new()),
                metadata: BTreeMap::new(),
                mentions: vec![MentionRecord { surface: format!("m{i}"), gold: Some(format!("g{}", i % 3)) }],
            })
            .collect();
        Corpus::from_records(records).unwrap()
    }

    #[test]
    fn ten_docs_split_six_two_two() {
        let s = split(&corpus_of(10), &SplitSpec { fractions: [0.6, 0.2, 0.2], seed: 7 }).unwrap();
        let sizes = (s.train.corpus.num_documents(), s.dev.corpus.num_documents(), s.test.corpus.num_documents());
        assert_eq!(sizes, (6, 2, 2));
    }

    #[test]
    fn seven_docs_largest_remainder() {
        // quotas 4.2 / 1.4 / 1.4: floors 4,1,1 and the spare seat goes to the
        // largest remainder, the later of the two tied parts
        assert_eq!(apportion(7, &[0.6, 0.2, 0.2]), vec![4, 1, 2]);
        let s = split(&corpus_of(7), &SplitSpec { fractions: [0.6, 0.2, 0.2], seed: 1 }).unwrap();
        assert_eq!(s.train.corpus.num_documents(), 4);
        assert_eq!(s.dev.corpus.num_documents(), 1);
        assert_eq!(s.test.corpus.num_documents(), 2);
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let corpus = corpus_of(23);
        let spec = SplitSpec { fractions: [0.5, 0.25, 0.25], seed: 99 };
        let a = split(&corpus, &spec).unwrap();
        let b = split(&corpus, &spec).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> =
            [&a.train, &a.dev, &a.test].iter().flat_map(|p| p.doc_indices.iter().copied()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn bad_fractions_are_config_errors() {
        let corpus = corpus_of(3);
        assert!(matches!(
            split(&corpus, &SplitSpec { fractions: [0.6, 0.2, 0.1], seed: 0 }),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split(&corpus, &SplitSpec { fractions: [1.2, -0.2, 0.0], seed: 0 }),
            Err(Error::Config(_))
        ));
    }
}
