use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Corpus, DocumentRecord, MentionRecord};
use crate::embeddings::Embeddings;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const CENTER_RETRIES: usize = 10_000;

/// Parameters of the planted-identity generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_individuals: usize,
    pub dim: usize,
    pub docs: usize,
    /// Inclusive `[min, max]` mentions per document.
    pub mentions_per_doc: (usize, usize),
    /// Probability that an individual reuses another individual's name.
    pub homograph_rate: f64,
    /// Probability that an individual gets a second name.
    pub synonym_rate: f64,
    /// Minimum Euclidean distance between unit-norm identity centers.
    pub center_separation: f64,
    /// Per-coordinate standard deviation of mention noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_individuals: 200,
            dim: 32,
            docs: 200,
            mentions_per_doc: (1, 4),
            homograph_rate: 0.2,
            synonym_rate: 0.2,
            center_separation: 1.0,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, r) in [("homograph_rate", self.homograph_rate), ("synonym_rate", self.synonym_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} must lie in [0, 1], got {r}"));
            }
        }
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if !(self.center_separation > 0.0) {
            return bad(format!("center_separation must be positive, got {}", self.center_separation));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be finite and nonnegative, got {}", self.noise_sigma));
        }
        if self.num_individuals == 0 {
            return bad("num_individuals must be positive".into());
        }
        let (lo, hi) = self.mentions_per_doc;
        if lo == 0 || lo > hi {
            return bad(format!("mentions_per_doc range [{lo}, {hi}] is invalid"));
        }
        if hi > self.num_individuals {
            return bad(format!("a document cannot name {hi} distinct people out of {}", self.num_individuals));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus<T> {
    pub corpus: Corpus,
    pub embeddings: Embeddings<T>,
    pub centers: Vec<Vec<f64>>,
    /// Surface forms available to each individual.
    pub names: Vec<Vec<String>>,
    /// Number of mentions generated for each individual.
    pub planted_counts: Vec<usize>,
}

pub fn identity_label(individual: usize) -> String {
    format!("id{individual:05}")
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ra", "ne", "to", "su", "vi", "de", "ho", "ba", "ze"];

/// Distinct, name-like string for every `n`.
fn make_name(n: usize) -> String {
    let mut digits = Vec::new();
    let mut x = n;
    loop {
        digits.push(x % SYLLABLES.len());
        x /= SYLLABLES.len();
        if x == 0 && digits.len() >= 2 {
            break;
        }
    }
    let mut surname: String = digits.iter().rev().map(|&d| SYLLABLES[d]).collect();
    surname[..1].make_ascii_uppercase();
    let initial = (b'A' + ((n * 7) % 26) as u8) as char;
    format!("{initial}. {surname}")
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Generates a corpus with planted identities and matching embeddings.
pub fn generate_synthetic<T: Scalar>(config: &SynthConfig) -> Result<SyntheticCorpus<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(config.num_individuals);
    for k in 0..config.num_individuals {
        let mut placed = None;
        for _ in 0..CENTER_RETRIES {
            let c = unit_gaussian(&mut rng, config.dim);
            if centers.iter().all(|o| euclid(o, &c) >= config.center_separation) {
                placed = Some(c);
                break;
            }
        }
        match placed {
            Some(c) => centers.push(c),
            None => {
                return Err(Error::Generation(format!(
                    "could not place center {k} at separation {} in {} dimensions after {CENTER_RETRIES} tries",
                    config.center_separation, config.dim
                )))
            }
        }
    }

    let mut next_name = 0usize;
    let mut fresh = || {
        next_name += 1;
        make_name(next_name - 1)
    };
    let mut names: Vec<Vec<String>> = Vec::with_capacity(config.num_individuals);
    for k in 0..config.num_individuals {
        let primary = if k > 0 && rng.random_bool(config.homograph_rate) {
            let donor = rng.random_range(0..k);
            names[donor][0].clone()
        } else {
            fresh()
        };
        let mut forms = vec![primary];
        if rng.random_bool(config.synonym_rate) {
            forms.push(fresh());
        }
        names.push(forms);
    }

    let (lo, hi) = config.mentions_per_doc;
    let mut planted_counts = vec![0usize; config.num_individuals];
    let mut records = Vec::with_capacity(config.docs);
    let mut data: Vec<T> = Vec::new();
    for d in 0..config.docs {
        let count = rng.random_range(lo..=hi);
        let people = index::sample(&mut rng, config.num_individuals, count);
        let mut mentions = Vec::with_capacity(count);
        for k in people.iter() {
            planted_counts[k] += 1;
            let forms = &names[k];
            let surface = forms[rng.random_range(0..forms.len())].clone();
            let mut v: Vec<f64> = centers[k]
                .iter()
                .map(|c| c + config.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
            } else {
                v.clone_from(&centers[k]);
            }
            data.extend(v.into_iter().map(T::of));
            mentions.push(MentionRecord { surface, gold: Some(identity_label(k)) });
        }
        records.push(DocumentRecord {
            doc_id: d as u64,
            order: (d as i64, format!("10.5555/synth.{d:06}")),
            metadata: BTreeMap::from([("title".to_string(), format!("Synthetic document {d}"))]),
            mentions,
        });
    }

    let corpus = Corpus::from_records(records)?;
    let embeddings = Embeddings::from_flat(config.dim, data)?;
    Ok(SyntheticCorpus { corpus, embeddings, centers, names, planted_counts })
}
