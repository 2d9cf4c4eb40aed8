use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use namegraph::antecedent::{sample_masks, DropoutMasks, Mlp};
use namegraph::assignment::{solve_max, solve_min, CostMatrix};
use namegraph::communities::{detect, modularity, planted_partition, Algorithm, CommunityConfig, Partition};
use namegraph::corpus::{generate_synthetic, SynthConfig};
use namegraph::graph::{Graph, GraphConfig, GraphMethod};
use namegraph::inference::{InferenceConfig, InferenceMethod};
use namegraph::metrics::{evaluate, EvalOptions};
use namegraph::pipeline::{run_pipeline, sweep_k_on_dev, ClassifierKind, RunConfig};
use namegraph::Clustering;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---- independent oracles ----

fn comb2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| comb2(n)).sum();
    let sa: f64 = rows.values().map(|&n| comb2(n)).sum();
    let sb: f64 = cols.values().map(|&n| comb2(n)).sum();
    let expected = sa * sb / comb2(a.len());
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Q by the double sum over node pairs.
fn modularity_oracle(n: usize, edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j, w) in edges {
        a[i][j] += w;
        if i != j {
            a[j][i] += w;
        }
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

fn communities_connected(g: &Graph<f64>, p: &Partition) -> bool {
    let labels = p.labels();
    p.communities().iter().all(|members| {
        let mut seen = BTreeSet::from([members[0]]);
        let mut queue = VecDeque::from([members[0]]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in g.neighbors(u) {
                if labels[v] == labels[u] && seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen.len() == members.len()
    })
}

fn best_by_enumeration(m: &[Vec<i64>], maximize: bool) -> i64 {
    // rows ≤ cols after transposing; try every injection of rows into columns
    let (rows, cols) = (m.len(), m[0].len());
    let t: Vec<Vec<i64>> = if rows <= cols { m.to_vec() } else { (0..cols).map(|c| (0..rows).map(|r| m[r][c]).collect()).collect() };
    fn rec(t: &[Vec<i64>], r: usize, used: &mut [bool], acc: i64, best: &mut Option<i64>, maximize: bool) {
        if r == t.len() {
            if best.is_none_or(|b| if maximize { acc > b } else { acc < b }) {
                *best = Some(acc);
            }
            return;
        }
        for c in 0..t[0].len() {
            if !used[c] {
                used[c] = true;
                rec(t, r + 1, used, acc + t[r][c], best, maximize);
                used[c] = false;
            }
        }
    }
    let mut best = None;
    rec(&t, 0, &mut vec![false; t[0].len()], 0, &mut best, maximize);
    best.unwrap()
}

// ---- criteria ----

fn metric_oracle() -> Outcome {
    let gold = Clustering::from_clusters(&[vec![0, 1, 2], vec![3]]);
    let response = Clustering::from_clusters(&[vec![0, 1], vec![2], vec![3]]);
    let r = evaluate::<f64>(&gold, &response, &EvalOptions::default());
    // hand-derived: MUC 2/3, B3 4/5, CEAF_e 18/25, CoNLL their mean
    let want = [(r.muc.f1, 2.0 / 3.0), (r.b3.f1, 0.8), (r.ceaf_e.f1, 0.72), (r.conll, (2.0 / 3.0 + 0.8 + 0.72) / 3.0)];
    for (got, exp) in want {
        check((got - exp).abs() <= 1e-6, format!("got {got:.6}, expected {exp:.6}"))?;
    }
    Ok(format!("MUC {:.6} B3 {:.6} CEAF_e {:.6} CoNLL {:.6}", r.muc.f1, r.b3.f1, r.ceaf_e.f1, r.conll))
}

fn assignment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let rows = rng.random_range(1..=7);
        let cols = rng.random_range(1..=7);
        let m: Vec<Vec<i64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-50..=50)).collect()).collect();
        let cm = CostMatrix::from_rows(&m).map_err(|e| e.to_string())?;
        for maximize in [false, true] {
            let pairs = if maximize { solve_max(&cm) } else { solve_min(&cm) }.map_err(|e| e.to_string())?;
            check(pairs.len() == rows.min(cols), format!("case {case}: matching size {}", pairs.len()))?;
            let rs: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
            let cs: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
            check(rs.len() == pairs.len() && cs.len() == pairs.len(), format!("case {case}: not a matching"))?;
            let got: i64 = pairs.iter().map(|&(r, c)| m[r][c]).sum();
            let want = best_by_enumeration(&m, maximize);
            check(got == want, format!("case {case} ({rows}x{cols}, max={maximize}): {got} vs {want}"))?;
        }
    }
    Ok("1000 matrices, min and max".into())
}

fn community_recovery() -> Outcome {
    let mut worst = [1.0f64; 2];
    for seed in 0..10 {
        let (g, planted) = planted_partition(&[30, 30], 0.9, 0.02, seed);
        for (slot, algorithm) in [Algorithm::Leiden, Algorithm::LabelPropagation].into_iter().enumerate() {
            let cfg = CommunityConfig { algorithm, seed, ..Default::default() };
            let p = detect(&g, &cfg).map_err(|e| e.to_string())?;
            let ari = adjusted_rand(p.labels(), &planted);
            worst[slot] = worst[slot].min(ari);
            check(ari >= 0.95, format!("{algorithm:?} seed {seed}: ARI {ari:.4}"))?;
            if algorithm == Algorithm::Leiden {
                check(communities_connected(&g, &p), format!("seed {seed}: disconnected Leiden community"))?;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut tested = 0;
    while tested < 100 {
        let n = rng.random_range(4..=40);
        let p = rng.random_range(0.05..0.5);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    edges.push((i, j, rng.random_range(0.1..1.0)));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        tested += 1;
        let g = Graph::from_edges(n, edges.iter().copied()).map_err(|e| e.to_string())?;
        let cfg = CommunityConfig { algorithm: Algorithm::Leiden, seed: tested, ..Default::default() };
        let part = detect(&g, &cfg).map_err(|e| e.to_string())?;
        let q = modularity_oracle(n, &edges, part.labels());
        let singles = modularity_oracle(n, &edges, Partition::singletons(n).labels());
        let whole = modularity_oracle(n, &edges, Partition::all_in_one(n).labels());
        check(q >= singles - 1e-12 && q >= whole - 1e-12, format!("graph {tested}: Q {q} < trivial ({singles}, {whole})"))?;
        check(communities_connected(&g, &part), format!("graph {tested}: disconnected Leiden community"))?;
    }
    Ok(format!("min ARI leiden {:.4}, label propagation {:.4}; 100 random graphs", worst[0], worst[1]))
}

fn two_triangles() -> Outcome {
    let edges = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)];
    let g = Graph::from_edges(6, edges).map_err(|e| e.to_string())?;
    let labels = [0, 0, 0, 1, 1, 1];
    let q = modularity(&g, &Partition::from_labels(&labels), 1.0).map_err(|e| e.to_string())?;
    let oracle = modularity_oracle(6, &edges, &labels);
    check((q - 0.5).abs() <= 1e-12 && (oracle - 0.5).abs() <= 1e-12, format!("Q = {q}, oracle {oracle}"))?;
    Ok(format!("Q = {q}"))
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d = rng.random_range(2..=6);
        let input = 2 * d + 1;
        let hidden: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=8)).collect();
        let m = Mlp::<f64>::new(input, &hidden, &mut rng);
        let n = rng.random_range(2..=8);
        let batch: Vec<(Vec<f64>, bool)> = (0..n)
            .map(|_| ((0..input).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_bool(0.5)))
            .collect();
        let dropout = [0.0, 0.3, 0.5][seed as usize % 3];
        let masks: Vec<DropoutMasks<f64>> = (0..n).map(|_| sample_masks(m.sizes(), dropout, &mut rng)).collect();
        let (_, grad) = m.loss_and_grad(&batch, Some(&masks));
        let p = m.params();
        let eps = 1e-5;
        for k in 0..p.len() {
            let mut probe = m.clone();
            let mut q = p.clone();
            q[k] += eps;
            probe.set_params(&q);
            let up = probe.loss(&batch, Some(&masks));
            q[k] -= 2.0 * eps;
            probe.set_params(&q);
            let down = probe.loss(&batch, Some(&masks));
            let numeric = (up - down) / (2.0 * eps);
            let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6);
            worst = worst.max(rel);
            check(rel <= 1e-4, format!("seed {seed} ({input} -> {hidden:?}) param {k}: {} vs {numeric}", grad[k]))?;
        }
        checked += p.len();
    }
    Ok(format!("{checked} parameters, max relative error {worst:.2e}"))
}

fn end_to_end() -> Outcome {
    let synth = SynthConfig {
        num_individuals: 5000,
        dim: 32,
        docs: 500,
        mentions_per_doc: (8, 12),
        homograph_rate: 0.2,
        synonym_rate: 0.2,
        center_separation: 0.8,
        noise_sigma: 0.02,
        seed: 1,
    };
    check(synth.center_separation >= 4.0 * synth.noise_sigma, "separation below 4 sigma")?;
    let s = generate_synthetic::<f64>(&synth).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig {
        seed: 1,
        graph: GraphConfig { method: GraphMethod::Knn, k: 5, ..Default::default() },
        ..Default::default()
    };
    let trained = run_pipeline(&s.corpus, &s.embeddings, &cfg).map_err(|e| e.to_string())?;
    cfg.classifier = ClassifierKind::Oracle;
    let oracle = run_pipeline(&s.corpus, &s.embeddings, &cfg).map_err(|e| e.to_string())?;
    let msg = format!("trained CoNLL {:.4}, oracle CoNLL {:.4}", trained.report.conll, oracle.report.conll);
    check(trained.report.conll >= 0.95 && oracle.report.conll == 1.0, msg.clone())?;
    Ok(msg)
}

fn precision_tradeoff() -> Outcome {
    let synth = SynthConfig { num_individuals: 150, docs: 120, mentions_per_doc: (1, 3), seed: 4, ..Default::default() };
    let s = generate_synthetic::<f64>(&synth).map_err(|e| e.to_string())?;
    let mut precision = Vec::new();
    let mut singleton_share = 0.0;
    for method in [InferenceMethod::Naive, InferenceMethod::Communities] {
        let mut cfg = RunConfig { inference: InferenceConfig { method, ..Default::default() }, ..Default::default() };
        cfg.eval.exclude_gold_singletons = false;
        if method == InferenceMethod::Communities {
            let best = sweep_k_on_dev(&s.corpus, &s.embeddings, &cfg, &[cfg.graph.k]).map_err(|e| e.to_string())?;
            cfg.graph.threshold = Some(best[0].threshold);
        }
        let out = run_pipeline(&s.corpus, &s.embeddings, &cfg).map_err(|e| e.to_string())?;
        let clusters = out.gold.clusters();
        singleton_share = clusters.iter().filter(|c| c.len() == 1).count() as f64 / clusters.len() as f64;
        precision.push(out.report.b3.precision);
    }
    check(singleton_share >= 0.5, format!("only {:.0}% gold singletons", 100.0 * singleton_share))?;
    let msg = format!(
        "B3 precision naive {:.4} < communities {:.4} ({:.0}% gold singletons)",
        precision[0],
        precision[1],
        100.0 * singleton_share
    );
    check(precision[1] > precision[0], msg.clone())?;
    Ok(msg)
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
    }
    out
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_namegraph");
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = root.path().join("data");
    let corpus = data.join("corpus.jsonl");
    let emb = data.join("embeddings.mwe");
    let (c, e) = (corpus.to_str().unwrap(), emb.to_str().unwrap());
    let graph = root.path().join("a").join("graph").join("graph.tsv");
    let train_pairs = root.path().join("a").join("pairs-train").join("pairs.csv");
    let model = root.path().join("a").join("train").join("model.mwm");
    let clustering = root.path().join("a").join("infer").join("clustering.tsv");
    let synth = ["synth", "--docs", "60", "--min-mentions", "2", "--max-mentions", "5", "--num-individuals", "80", "--seed", "3"];
    let input = ["--corpus", c, "--embeddings", e, "--seed", "5"];
    let steps: Vec<(&str, Vec<&str>)> = vec![
        ("synth", synth.to_vec()),
        ("graph", [&["graph"][..], &input].concat()),
        ("communities", vec!["communities", "--graph", graph.to_str().unwrap(), "--seed", "5"]),
        ("pairs-train", [&["pairs", "--part", "train"][..], &input].concat()),
        ("pairs-nearest", [&["pairs", "--strategy", "nearest", "--part", "dev"][..], &input].concat()),
        ("train", [&["train", "--pairs", train_pairs.to_str().unwrap(), "--epochs", "3"][..], &input].concat()),
        ("infer", [&["infer", "--model", model.to_str().unwrap()][..], &input].concat()),
        ("infer-lp", [&["infer", "--method", "communities", "--algorithm", "label-propagation"][..], &input].concat()),
        ("eval", vec!["eval", "--corpus", c, "--clustering", clustering.to_str().unwrap()]),
        ("sweep-k", [&["sweep-k", "--k-values", "3,5"][..], &input].concat()),
        ("learning-curve", [&["learning-curve", "--fractions", "0.5,1", "--classifier", "oracle"][..], &input].concat()),
        ("run", [&["run", "--epochs", "3"][..], &input].concat()),
    ];
    let mut compared = 0;
    for (name, args) in &steps {
        let mut outputs = Vec::new();
        for copy in ["a", "b"] {
            let out = if *name == "synth" { data.join(copy) } else { root.path().join(copy).join(name) };
            let status = Command::new(bin)
                .args(args)
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            check(status.status.success(), format!("{name} failed: {}", String::from_utf8_lossy(&status.stderr)))?;
            outputs.push(files_under(&out));
        }
        if *name == "synth" {
            // later steps read the first copy
            for (file, bytes) in &outputs[0] {
                std::fs::write(data.join(file), bytes).map_err(|e| e.to_string())?;
            }
        }
        check(!outputs[0].is_empty(), format!("{name} wrote nothing"))?;
        check(outputs[0] == outputs[1], format!("{name}: outputs differ between runs"))?;
        compared += outputs[0].len();
    }
    Ok(format!("{} commands, {compared} files identical", steps.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("metric oracle", metric_oracle, Duration::from_secs(1)),
        ("assignment oracle", assignment_oracle, Duration::from_secs(30)),
        ("community recovery", community_recovery, Duration::from_secs(60)),
        ("modularity two triangles", two_triangles, Duration::from_secs(60)),
        ("gradient check", gradient_check, Duration::from_secs(60)),
        ("end-to-end synthetic", end_to_end, Duration::from_secs(300)),
        ("naive vs community precision", precision_tradeoff, Duration::from_secs(300)),
        ("cli determinism", cli_determinism, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > budget => Err(format!("{detail}; took {took:.1?}, budget {budget:?}")),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name:<30} {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<30} {why} [{took:.2?}]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
