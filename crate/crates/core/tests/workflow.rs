use namegraph::antecedent::{load_model, read_sidecar, save_model, ModelScorer, OracleScorer};
use namegraph::corpus::{generate_synthetic, split, SplitSpec, SynthConfig};
use namegraph::graph::{build_graph, GraphConfig};
use namegraph::inference::{antecedent_cluster, InferenceConfig};
use namegraph::metrics::{evaluate, EvalOptions};
use namegraph::pipeline::{sample_pairs, train_model, PairConfig};
use namegraph::antecedent::TrainConfig;
use namegraph::Clustering;

fn synth() -> namegraph::corpus::SyntheticCorpus<f64> {
    let cfg = SynthConfig { num_individuals: 60, docs: 80, mentions_per_doc: (2, 4), seed: 12, ..Default::default() };
    generate_synthetic(&cfg).unwrap()
}

// The steps the CLI chains by hand: sample, train, save, reload, infer.
#[test]
fn saved_model_reproduces_inference() {
    let s = synth();
    let parts = split(&s.corpus, &SplitSpec::default()).unwrap();
    let graph_cfg = GraphConfig::default();
    let train_pairs = sample_pairs(&parts.train, &s.embeddings, &graph_cfg, &PairConfig::default()).unwrap();
    let dev_pairs = sample_pairs(&parts.dev, &s.embeddings, &graph_cfg, &PairConfig::default()).unwrap();
    assert!(train_pairs.iter().any(|p| p.label) && train_pairs.iter().any(|p| !p.label));
    let tc = TrainConfig { epochs: 4, hidden: vec![16, 16], ..Default::default() };
    let trained = train_model(&train_pairs, &dev_pairs, &s.embeddings, &tc).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mwm");
    save_model(&trained.model, &trained.sidecar, &path).unwrap();
    let sidecar = read_sidecar(&path).unwrap();
    assert_eq!(sidecar, trained.sidecar);
    assert_eq!(sidecar.training_pairs, train_pairs.len());
    let reloaded = load_model(&path).unwrap();

    let g = build_graph(&s.embeddings, &s.corpus, &graph_cfg).unwrap();
    let targets = vec![true; s.corpus.num_mentions()];
    let cfg = InferenceConfig::default();
    let a = antecedent_cluster(&s.corpus, &targets, &g, &ModelScorer::new(&trained.model, &s.embeddings, &s.corpus).unwrap(), &cfg).unwrap();
    let b = antecedent_cluster(&s.corpus, &targets, &g, &ModelScorer::new(&reloaded, &s.embeddings, &s.corpus).unwrap(), &cfg).unwrap();
    // binary32 storage can only flip scores sitting on the threshold
    let r = evaluate::<f64>(&a, &b, &EvalOptions::default());
    assert!(r.conll > 0.99, "{}", r.conll);
    assert_eq!(a.len(), s.corpus.num_mentions());
}

#[test]
fn oracle_cold_start_covers_every_mention() {
    let s = synth();
    let g = build_graph(&s.embeddings, &s.corpus, &GraphConfig { k: 8, ..Default::default() }).unwrap();
    let targets = vec![true; s.corpus.num_mentions()];
    let c = antecedent_cluster(&s.corpus, &targets, &g, &OracleScorer::new(&s.corpus), &InferenceConfig::default()).unwrap();
    let gold = Clustering::gold_from_corpus(&s.corpus);
    assert_eq!(c.len(), s.corpus.num_mentions());
    let r = evaluate::<f64>(&gold, &c, &EvalOptions::default());
    // the oracle never merges two identities
    assert_eq!(r.b3.precision, 1.0);
}
