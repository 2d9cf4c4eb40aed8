use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use namegraph::antecedent::{
    load_model, save_model, ModelScorer, OracleScorer, PairExample, PairScorer,
};
use namegraph::communities::{detect, modularity, save_partition};
use namegraph::corpus::{generate_synthetic, load_corpus, split, Corpus, SubCorpus};
use namegraph::embeddings::{load_embeddings, load_token_embeddings, MENTION_MAGIC, TOKEN_MAGIC};
use namegraph::graph::{build_graph, load_edge_list, save_edge_list};
use namegraph::inference::{
    antecedent_cluster, communities_to_clustering, load_clustering_tsv, naive_cluster, save_clustering_tsv,
    ClusteringJson, InferenceMethod,
};
use namegraph::metrics::{evaluate, EvalOptions};
use namegraph::pipeline::{learning_curve as curve, run_pipeline, sample_pairs, sweep_k_on_dev, train_model};
use namegraph::{Clustering, EmbeddingMatrix, MetricReport};
use serde::{Deserialize, Serialize};

use crate::config::{load_synth_config, output_dir, PipelineConfig};
use crate::{
    ClassifierArg, CommunityFlags, GraphFlags, Inputs, MethodArg, PartArg, StrategyArg, SynthArgs, TrainFlags,
};

/// Loaded config with flag overrides applied, plus the output directory.
struct Session {
    cfg: PipelineConfig,
    out: PathBuf,
}

impl Session {
    fn open(inputs: &Inputs) -> Result<Self> {
        let mut cfg = PipelineConfig::load_or_default(inputs.config.as_deref())?;
        if let Some(p) = &inputs.corpus {
            cfg.corpus = Some(p.clone());
        }
        if let Some(p) = &inputs.embeddings {
            cfg.embeddings = Some(p.clone());
        }
        if let Some(s) = inputs.seed {
            cfg.run.seed = s;
        }
        let out = output_dir(inputs.out.clone(), cfg.output_dir.as_ref());
        Ok(Session { cfg, out })
    }

    fn graph(&mut self, f: &GraphFlags) {
        let g = &mut self.cfg.run.graph;
        if let Some(m) = f.graph_method {
            g.method = m.into();
        }
        if let Some(k) = f.k {
            g.k = k;
        }
        if let Some(m) = f.multiplier {
            g.multiplier = m;
        }
        if f.threshold.is_some() {
            g.threshold = f.threshold;
        }
    }

    fn communities(&mut self, f: &CommunityFlags) {
        apply_communities(&mut self.cfg.run.communities, f);
    }

    fn train(&mut self, f: &TrainFlags) {
        let t = &mut self.cfg.run.train;
        if let Some(v) = f.epochs {
            t.epochs = v;
        }
        if let Some(v) = f.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = f.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = f.patience {
            t.patience = v;
        }
    }

    fn inputs(&self) -> Result<(Corpus, EmbeddingMatrix)> {
        let corpus_path = self.cfg.corpus_path()?;
        let corpus = load_corpus(corpus_path).with_context(|| format!("loading corpus {}", corpus_path.display()))?;
        let emb = read_any_embeddings(self.cfg.embeddings_path()?)?;
        if emb.len() != corpus.num_mentions() {
            bail!("{} embeddings for {} mentions", emb.len(), corpus.num_mentions());
        }
        Ok((corpus, emb))
    }

    fn create_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn apply_communities(c: &mut namegraph::communities::CommunityConfig, f: &CommunityFlags) {
    if let Some(a) = f.algorithm {
        c.algorithm = a.into();
    }
    if let Some(r) = f.resolution {
        c.resolution = r;
    }
    if let Some(m) = f.max_iterations {
        c.max_iterations = m;
    }
    if f.unweighted {
        c.weighted = false;
    }
}

/// Picks the mention or token reader from the file's magic.
fn read_any_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .with_context(|| format!("reading {}", path.display()))?;
    let emb = if &magic == TOKEN_MAGIC {
        load_token_embeddings(path)
    } else if &magic == MENTION_MAGIC {
        load_embeddings(path)
    } else {
        bail!("{}: unknown embedding format {:?}", path.display(), String::from_utf8_lossy(&magic));
    };
    emb.with_context(|| format!("loading embeddings {}", path.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_clustering(c: &Clustering, s: &Session) -> Result<()> {
    save_clustering_tsv(c, s.path("clustering.tsv"))?;
    write_json(&ClusteringJson::from(c), &s.path("clustering.json"))
}

fn write_report(report: &MetricReport, s: &Session) -> Result<()> {
    write_json(report, &s.path("report.json"))?;
    let table = report.to_table();
    fs::write(s.path("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = load_synth_config(args.config.as_deref())?;
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.num_individuals, args.num_individuals);
    set(&mut cfg.dim, args.dim);
    set(&mut cfg.docs, args.docs);
    set(&mut cfg.mentions_per_doc.0, args.min_mentions);
    set(&mut cfg.mentions_per_doc.1, args.max_mentions);
    let setf = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    setf(&mut cfg.homograph_rate, args.homograph_rate);
    setf(&mut cfg.synonym_rate, args.synonym_rate);
    setf(&mut cfg.center_separation, args.center_separation);
    setf(&mut cfg.noise_sigma, args.noise_sigma);
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = output_dir(args.out, None);
    fs::create_dir_all(&out)?;
    let synth = generate_synthetic::<f64>(&cfg)?;
    synth.corpus.save(out.join("corpus.jsonl"))?;
    namegraph::embeddings::save_embeddings(&synth.embeddings, out.join("embeddings.mwe"))?;
    fs::write(out.join("synth_config.toml"), toml::to_string(&cfg)?)?;
    println!(
        "{} documents, {} mentions, {} individuals -> {}",
        synth.corpus.num_documents(),
        synth.corpus.num_mentions(),
        cfg.num_individuals,
        out.display()
    );
    Ok(())
}

pub fn graph(inputs: Inputs, flags: GraphFlags) -> Result<()> {
    let mut s = Session::open(&inputs)?;
    s.graph(&flags);
    let (corpus, emb) = s.inputs()?;
    let g = build_graph(&emb, &corpus, &s.cfg.run.graph)?;
    s.create_out()?;
    save_edge_list(&g, s.path("graph.tsv"))?;
    println!("{} nodes, {} edges", g.num_nodes(), g.num_edges());
    Ok(())
}

#[derive(Serialize)]
struct CommunitySummary {
    algorithm: namegraph::communities::Algorithm,
    resolution: f64,
    seed: u64,
    num_communities: usize,
    /// Absent when the graph has no edges.
    modularity: Option<f64>,
}

pub fn communities(
    graph_path: PathBuf,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    flags: CommunityFlags,
) -> Result<()> {
    let cfg = PipelineConfig::load_or_default(config.as_deref())?;
    let mut cc = cfg.run.resolved().communities;
    if let Some(s) = seed {
        cc.seed = s;
    }
    apply_communities(&mut cc, &flags);
    let g = load_edge_list(&graph_path).with_context(|| format!("loading graph {}", graph_path.display()))?;
    let p = detect(&g, &cc)?;
    let q = modularity(&g, &p, cc.resolution).ok();
    let out = output_dir(out, cfg.output_dir.as_ref());
    fs::create_dir_all(&out)?;
    save_partition(&p, out.join("partition.tsv"))?;
    let summary = CommunitySummary {
        algorithm: cc.algorithm,
        resolution: cc.resolution,
        seed: cc.seed,
        num_communities: p.num_communities(),
        modularity: q,
    };
    write_json(&summary, &out.join("communities.json"))?;
    match q {
        Some(q) => println!("{} communities, modularity {q:.6}", p.num_communities()),
        None => println!("{} communities, modularity undefined", p.num_communities()),
    }
    Ok(())
}

/// One `pairs.csv` row; booleans are written as 0/1.
#[derive(Debug, Serialize, Deserialize)]
struct PairRow {
    mention_i: usize,
    mention_j: usize,
    surface_match: u8,
    label: u8,
}

impl From<&PairExample> for PairRow {
    fn from(p: &PairExample) -> Self {
        PairRow {
            mention_i: p.mention_i,
            mention_j: p.mention_j,
            surface_match: p.surface_match as u8,
            label: p.label as u8,
        }
    }
}

fn flag(v: u8, line: usize) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => bail!("row {line}: expected 0 or 1, got {v}"),
    }
}

fn read_pairs(path: &Path) -> Result<Vec<PairExample>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut pairs = Vec::new();
    for (idx, row) in r.deserialize::<PairRow>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), idx + 1))?;
        pairs.push(PairExample {
            mention_i: row.mention_i,
            mention_j: row.mention_j,
            surface_match: flag(row.surface_match, idx + 1)?,
            label: flag(row.label, idx + 1)?,
        });
    }
    Ok(pairs)
}

fn part_of(corpus: &Corpus, s: &Session, part: PartArg) -> Result<SubCorpus> {
    if part == PartArg::All {
        let all: Vec<usize> = (0..corpus.num_documents()).collect();
        return Ok(corpus.subset(&all));
    }
    let parts = split(corpus, &s.cfg.run.split_spec())?;
    Ok(match part {
        PartArg::Train => parts.train,
        PartArg::Dev => parts.dev,
        _ => parts.test,
    })
}

pub fn pairs(
    inputs: Inputs,
    flags: GraphFlags,
    strategy: Option<StrategyArg>,
    nearest_n: Option<usize>,
    no_add_all_positives: bool,
    part: PartArg,
) -> Result<()> {
    let mut s = Session::open(&inputs)?;
    s.graph(&flags);
    let pc = &mut s.cfg.run.pairs;
    if let Some(st) = strategy {
        pc.strategy = st.into();
    }
    if let Some(n) = nearest_n {
        pc.nearest_n = n;
    }
    if no_add_all_positives {
        pc.add_all_positives = false;
    }
    let (corpus, emb) = s.inputs()?;
    let sub = part_of(&corpus, &s, part)?;
    let found = sample_pairs(&sub, &emb, &s.cfg.run.graph, &s.cfg.run.pairs)?;
    s.create_out()?;
    let rows: Vec<PairRow> = found.iter().map(PairRow::from).collect();
    write_csv(&rows, &s.path("pairs.csv"))?;
    let positives = found.iter().filter(|p| p.label).count();
    println!("{} pairs ({positives} positive)", found.len());
    Ok(())
}

fn check_pair_ids(pairs: &[PairExample], n: usize, path: &Path) -> Result<()> {
    if let Some(p) = pairs.iter().find(|p| p.mention_i >= n || p.mention_j >= n) {
        bail!("{}: pair ({}, {}) is outside the {n} embedded mentions", path.display(), p.mention_i, p.mention_j);
    }
    Ok(())
}

pub fn train(inputs: Inputs, pairs_path: PathBuf, dev_path: Option<PathBuf>, flags: TrainFlags) -> Result<()> {
    let mut s = Session::open(&inputs)?;
    s.train(&flags);
    let emb = read_any_embeddings(s.cfg.embeddings_path()?)?;
    let train_pairs = read_pairs(&pairs_path)?;
    check_pair_ids(&train_pairs, emb.len(), &pairs_path)?;
    let dev_pairs = match &dev_path {
        Some(p) => {
            let d = read_pairs(p)?;
            check_pair_ids(&d, emb.len(), p)?;
            d
        }
        None => Vec::new(),
    };
    let tc = s.cfg.run.resolved().train;
    let trained = train_model(&train_pairs, &dev_pairs, &emb, &tc)?;
    s.create_out()?;
    save_model(&trained.model, &trained.sidecar, s.path("model.mwm"))?;
    write_json(&trained.report, &s.path("train_report.json"))?;
    println!(
        "trained {} epochs (best {}), {} parameters",
        trained.report.epochs_run,
        trained.report.best_epoch,
        trained.model.num_params()
    );
    Ok(())
}

fn read_doc_ids(path: &Path) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse().with_context(|| format!("{}: line {}: bad doc id {l:?}", path.display(), i + 1)))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn infer(
    inputs: Inputs,
    gflags: GraphFlags,
    cflags: CommunityFlags,
    method: Option<MethodArg>,
    model_path: Option<PathBuf>,
    oracle: bool,
    target_docs: Option<PathBuf>,
) -> Result<()> {
    let mut s = Session::open(&inputs)?;
    s.graph(&gflags);
    s.communities(&cflags);
    if let Some(m) = method {
        s.cfg.run.inference.method = m.into();
    }
    let run = s.cfg.run.resolved();
    let (corpus, emb) = s.inputs()?;
    let g = build_graph(&emb, &corpus, &run.graph)?;
    let clustering = match run.inference.method {
        InferenceMethod::Naive => naive_cluster(&corpus, &g, &emb)?,
        InferenceMethod::Communities => communities_to_clustering(&detect(&g, &run.communities)?),
        InferenceMethod::Antecedent => {
            let targets: Vec<bool> = match &target_docs {
                None => vec![true; corpus.num_mentions()],
                Some(p) => {
                    let wanted = read_doc_ids(p)?;
                    let known: std::collections::BTreeSet<u64> = corpus.documents().iter().map(|d| d.doc_id).collect();
                    if let Some(d) = wanted.iter().find(|d| !known.contains(d)) {
                        bail!("{}: doc id {d} is not in the corpus", p.display());
                    }
                    let mut t = vec![false; corpus.num_mentions()];
                    for d in corpus.documents().iter().filter(|d| wanted.contains(&d.doc_id)) {
                        for m in &d.mentions {
                            t[m.mention_id] = true;
                        }
                    }
                    t
                }
            };
            let loaded;
            let model_scorer;
            let oracle_scorer;
            let scorer: &dyn PairScorer = match (&model_path, oracle) {
                (Some(_), true) => bail!("--model and --oracle are mutually exclusive"),
                (Some(p), false) => {
                    loaded = load_model(p).with_context(|| format!("loading model {}", p.display()))?;
                    model_scorer = ModelScorer::new(&loaded, &emb, &corpus)?;
                    &model_scorer
                }
                (None, true) => {
                    oracle_scorer = OracleScorer::new(&corpus);
                    &oracle_scorer
                }
                (None, false) => bail!("antecedent inference needs --model or --oracle"),
            };
            antecedent_cluster(&corpus, &targets, &g, scorer, &run.inference)?.restrict(|m| targets[m])
        }
    };
    s.create_out()?;
    write_clustering(&clustering, &s)?;
    println!("{} mentions in {} clusters", clustering.len(), clustering.clusters().len());
    Ok(())
}

pub fn eval(corpus_path: PathBuf, clustering_path: PathBuf, exclude_gold_singletons: bool, out: Option<PathBuf>) -> Result<()> {
    let corpus = load_corpus(&corpus_path).with_context(|| format!("loading corpus {}", corpus_path.display()))?;
    let response = load_clustering_tsv(&clustering_path)
        .with_context(|| format!("loading clustering {}", clustering_path.display()))?;
    if let Some((m, _)) = response.iter().find(|&(m, _)| m >= corpus.num_mentions()) {
        bail!("clustering names mention {m}, corpus has {}", corpus.num_mentions());
    }
    // Score only the mentions that were clustered, so a clustering of one
    // split part is not penalised for the rest of the corpus.
    let gold = Clustering::gold_from_corpus(&corpus).restrict(|m| response.contains(m));
    let opts = EvalOptions { exclude_gold_singletons, ..EvalOptions::default() };
    let report = evaluate::<f64>(&gold, &response, &opts);
    let s = Session { cfg: PipelineConfig::default(), out: output_dir(out, None) };
    s.create_out()?;
    write_report(&report, &s)
}

pub fn sweep_k(inputs: Inputs, cflags: CommunityFlags, k_values: Vec<usize>, method: MethodArg) -> Result<()> {
    let mut s = Session::open(&inputs)?;
    s.communities(&cflags);
    s.cfg.run.inference.method = method.into();
    let (corpus, emb) = s.inputs()?;
    let rows = sweep_k_on_dev(&corpus, &emb, &s.cfg.run, &k_values)?;
    s.create_out()?;
    write_csv(&rows, &s.path("sweep_k.csv"))?;
    for r in &rows {
        println!("k={:<4} threshold={:<12} conll={:.6}", r.k, r.threshold, r.conll);
    }
    Ok(())
}

pub fn learning_curve(inputs: Inputs, fractions: Vec<f64>, classifier: Option<ClassifierArg>) -> Result<()> {
    let mut s = Session::open(&inputs)?;
    if let Some(c) = classifier {
        s.cfg.run.classifier = c.into();
    }
    let (corpus, emb) = s.inputs()?;
    let rows = curve(&corpus, &emb, &s.cfg.run, &fractions)?;
    s.create_out()?;
    write_csv(&rows, &s.path("learning_curve.csv"))?;
    for r in &rows {
        let score = r.conll.map_or_else(|| "-".to_string(), |c| format!("{c:.6}"));
        let note = r.flag.as_deref().unwrap_or("");
        println!(
            "fraction={:<5} docs={:<6} positives={:<7} conll={score:<9} communities={:.6} {note}",
            r.fraction, r.train_docs, r.positive_pairs, r.community_conll
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    inputs: Inputs,
    gflags: GraphFlags,
    cflags: CommunityFlags,
    tflags: TrainFlags,
    method: Option<MethodArg>,
    classifier: Option<ClassifierArg>,
    exclude_gold_singletons: bool,
) -> Result<()> {
    let mut s = Session::open(&inputs)?;
    s.graph(&gflags);
    s.communities(&cflags);
    s.train(&tflags);
    if let Some(m) = method {
        s.cfg.run.inference.method = m.into();
    }
    if let Some(c) = classifier {
        s.cfg.run.classifier = c.into();
    }
    if exclude_gold_singletons {
        s.cfg.run.eval.exclude_gold_singletons = true;
    }
    let (corpus, emb) = s.inputs()?;
    let outcome = run_pipeline(&corpus, &emb, &s.cfg.run)?;
    s.create_out()?;
    fs::write(s.path("effective_config.toml"), s.cfg.effective_toml()?)?;
    save_edge_list(&outcome.graph, s.path("graph.tsv"))?;
    write_clustering(&outcome.clustering, &s)?;
    if let Some(t) = &outcome.model {
        save_model(&t.model, &t.sidecar, s.path("model.mwm"))?;
        write_json(&t.report, &s.path("train_report.json"))?;
    }
    let [tr, dv, te] = outcome.split_sizes;
    println!("split: {tr} train / {dv} dev / {te} test documents");
    write_report(&outcome.report, &s)
}
