//! Coreference scores: MUC, B³, CEAF_e and their CoNLL average.
//!
//! Mentions present on one side only are treated as singletons on the other.
//! Undefined ratios (zero denominators) are reported as 0 with `undefined`
//! set rather than as NaN.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_max, CostMatrix};
use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::scalar::Measure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub undefined: bool,
}

impl<T: Measure> Prf<T> {
    fn from_ratios(p: Option<T>, r: Option<T>) -> Self {
        let undefined = p.is_none() || r.is_none();
        let (precision, recall) = (p.unwrap_or_else(T::zero), r.unwrap_or_else(T::zero));
        Prf { precision, recall, f1: f1(precision, recall), undefined }
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1<T: Measure>(p: T, r: T) -> T {
    if p + r == T::zero() {
        T::zero()
    } else {
        (T::from_count(2) * p * r) / (p + r)
    }
}

fn ratio<T: Measure>(num: T, den: T) -> Option<T> {
    (den != T::zero()).then(|| num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    #[serde(default)]
    pub exclude_gold_singletons: bool,
    /// Unlabelled mentions are never scored; `false` is rejected.
    #[serde(default = "default_true")]
    pub drop_unlabeled: bool,
}

fn default_true() -> bool {
    true
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { exclude_gold_singletons: false, drop_unlabeled: true }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.drop_unlabeled {
            return Err(Error::Config("drop_unlabeled cannot be disabled: unlabelled mentions have no gold cluster".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub muc: Prf<T>,
    pub b3: Prf<T>,
    pub ceaf_e: Prf<T>,
    pub conll: T,
    pub mentions: usize,
    pub gold_clusters: usize,
    pub response_clusters: usize,
}

/// Cluster membership of every mention on one side.
struct Side {
    clusters: Vec<Vec<usize>>,
    of: BTreeMap<usize, usize>,
}

impl Side {
    fn new(c: &Clustering) -> Self {
        let clusters = c.clusters();
        let of = clusters.iter().enumerate().flat_map(|(i, ms)| ms.iter().map(move |&m| (m, i))).collect();
        Side { clusters, of }
    }
}

/// Σ_K (|K| − |parts of K|) over `key`, and Σ_K (|K| − 1).
fn muc_counts(key: &Side, other: &Side) -> (usize, usize) {
    let mut num = 0;
    let mut den = 0;
    for k in &key.clusters {
        let mut parts = BTreeSet::new();
        let mut loose = 0;
        for m in k {
            match other.of.get(m) {
                Some(c) => {
                    parts.insert(*c);
                }
                None => loose += 1,
            }
        }
        num += k.len() - (parts.len() + loose);
        den += k.len() - 1;
    }
    (num, den)
}

pub fn muc<T: Measure>(gold: &Clustering, response: &Clustering) -> Prf<T> {
    let (g, r) = (Side::new(gold), Side::new(response));
    let (rn, rd) = muc_counts(&g, &r);
    let (pn, pd) = muc_counts(&r, &g);
    Prf::from_ratios(
        ratio(T::from_count(pn), T::from_count(pd)),
        ratio(T::from_count(rn), T::from_count(rd)),
    )
}

/// Mean over `key` mentions of |K(m) ∩ O(m)| / |K(m)|.
fn b3_side<T: Measure>(key: &Side, other: &Side) -> Option<T> {
    let mut total = T::zero();
    let mut count = 0;
    for k in &key.clusters {
        let mut overlap: BTreeMap<Option<usize>, usize> = BTreeMap::new();
        for m in k {
            *overlap.entry(other.of.get(m).copied()).or_insert(0) += 1;
        }
        for m in k {
            let shared = match other.of.get(m) {
                Some(c) => overlap[&Some(*c)],
                None => 1,
            };
            total = total + T::from_count(shared) / T::from_count(k.len());
            count += 1;
        }
    }
    ratio(total, T::from_count(count))
}

pub fn b_cubed<T: Measure>(gold: &Clustering, response: &Clustering) -> Prf<T> {
    let (g, r) = (Side::new(gold), Side::new(response));
    Prf::from_ratios(b3_side(&r, &g), b3_side(&g, &r))
}

/// φ4 similarity of two entities: 2|K ∩ R| / (|K| + |R|).
pub fn phi4<T: Measure>(k: &[usize], r: &[usize]) -> T {
    let ks: BTreeSet<usize> = k.iter().copied().collect();
    let shared = r.iter().filter(|m| ks.contains(m)).count();
    T::from_count(2 * shared) / T::from_count(k.len() + r.len())
}

/// Optimal one-to-one entity alignment score Σφ4.
pub fn ceaf_alignment<T: Measure>(gold: &[Vec<usize>], response: &[Vec<usize>]) -> T {
    if gold.is_empty() || response.is_empty() {
        return T::zero();
    }
    let data: Vec<T> = gold.iter().flat_map(|k| response.iter().map(move |r| phi4::<T>(k, r))).collect();
    let m = CostMatrix::new(gold.len(), response.len(), data).expect("φ4 entries are finite");
    m.total(&solve_max(&m).expect("valid matrix"))
}

pub fn ceaf_e<T: Measure>(gold: &Clustering, response: &Clustering) -> Prf<T> {
    let (g, r) = (gold.clusters(), response.clusters());
    let sim: T = ceaf_alignment(&g, &r);
    Prf::from_ratios(ratio(sim, T::from_count(r.len())), ratio(sim, T::from_count(g.len())))
}

/// Unweighted mean of the three F1 scores.
pub fn conll<T: Measure>(muc_f1: T, b3_f1: T, ceaf_f1: T) -> T {
    (muc_f1 + b3_f1 + ceaf_f1) / T::from_count(3)
}

/// Restricts both sides to gold-labelled mentions and, optionally, drops
/// mentions whose gold cluster is a singleton. Response clusters emptied by
/// the filter disappear; the rest are re-partitioned over what remains.
pub fn filter_for_eval(gold: &Clustering, response: &Clustering, options: &EvalOptions) -> (Clustering, Clustering) {
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, c) in gold.iter() {
        *sizes.entry(c).or_insert(0) += 1;
    }
    let keep = |m: usize| match gold.get(m) {
        None => false,
        Some(c) => !options.exclude_gold_singletons || sizes[&c] > 1,
    };
    (gold.restrict(keep), response.restrict(keep))
}

/// Filters, then computes every score.
pub fn evaluate<T: Measure>(gold: &Clustering, response: &Clustering, options: &EvalOptions) -> MetricReport<T> {
    let (g, r) = filter_for_eval(gold, response, options);
    let muc = muc(&g, &r);
    let b3 = b_cubed(&g, &r);
    let ceaf = ceaf_e(&g, &r);
    MetricReport {
        conll: conll(muc.f1, b3.f1, ceaf.f1),
        muc,
        b3,
        ceaf_e: ceaf,
        mentions: g.len(),
        gold_clusters: g.clusters().len(),
        response_clusters: r.clusters().len(),
    }
}

impl<T: Measure> MetricReport<T> {
    pub fn to_f64(&self) -> MetricReport<f64> {
        let cv = |p: &Prf<T>| Prf {
            precision: p.precision.to_f64_lossy(),
            recall: p.recall.to_f64_lossy(),
            f1: p.f1.to_f64_lossy(),
            undefined: p.undefined,
        };
        MetricReport {
            muc: cv(&self.muc),
            b3: cv(&self.b3),
            ceaf_e: cv(&self.ceaf_e),
            conll: self.conll.to_f64_lossy(),
            mentions: self.mentions,
            gold_clusters: self.gold_clusters,
            response_clusters: self.response_clusters,
        }
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let r = self.to_f64();
        let mut out = String::new();
        writeln!(out, "{:<8} {:>10} {:>10} {:>10}", "metric", "precision", "recall", "f1").unwrap();
        for (name, p) in [("MUC", &r.muc), ("B3", &r.b3), ("CEAF_e", &r.ceaf_e)] {
            let flag = if p.undefined { "  (undefined)" } else { "" };
            writeln!(out, "{:<8} {:>10.6} {:>10.6} {:>10.6}{flag}", name, p.precision, p.recall, p.f1).unwrap();
        }
        writeln!(out, "{:<8} {:>10} {:>10} {:>10.6}", "CoNLL", "", "", r.conll).unwrap();
        writeln!(
            out,
            "mentions={} gold_clusters={} response_clusters={}",
            r.mentions, r.gold_clusters, r.response_clusters
        )
        .unwrap();
        out
    }
}
