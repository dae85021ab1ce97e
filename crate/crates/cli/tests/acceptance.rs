//! Acceptance suite: one PASS/FAIL line per criterion.

use std::time::Instant;

use mspn::analysis::{mi_graph, mutual_information, variable_grid, DEFAULT_GRID};
use mspn::data::{write_csv, ColumnSpec, ColumnType, Dataset, Schema, StatType};
use mspn::inference::{
    log_conditional, log_evaluate, log_evaluate_with_stats, mpe_with_stats, sample, sample_with_stats, Evidence,
    VarState,
};
use mspn::leaves::{fit_histogram, HistogramLeaf, PiecewiseDensity, PiecewiseLinearLeaf};
use mspn::model_file::{deserialize, serialize};
use mspn::numerics::rng_from_seed;
use mspn::rdc::rdc;
use mspn::structure::{learn_mspn, validate, LearnConfig, Mspn, MspnNode, NodeKind};
use mspn::synth;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn learn(data: &Dataset) -> Mspn {
    learn_mspn(data, &LearnConfig::default()).expect("learning succeeds")
}

struct Fixture {
    name: &'static str,
    data: Dataset,
    model: Mspn,
}

fn fixtures() -> Vec<Fixture> {
    synth::fixtures(2000, 1)
        .into_iter()
        .map(|(name, data)| {
            let model = learn(&data);
            Fixture { name, data, model }
        })
        .collect()
}

fn validity(fx: &[Fixture]) -> Outcome {
    let mut bad = Vec::new();
    for f in fx {
        let report = validate(&f.model);
        if !report.is_valid() {
            bad.push(format!("{}: {report}", f.name));
        }
    }
    let kinds: Vec<bool> = fx
        .iter()
        .map(|f| f.data.schema().stat_types().iter().any(|t| t.is_categorical()))
        .collect();
    let data = synth::wide(5000, 3);
    let start = Instant::now();
    let model = learn(&data);
    let secs = start.elapsed().as_secs_f64();
    let wide_ok = validate(&model).is_valid();
    check(
        bad.is_empty() && fx.len() >= 6 && kinds.contains(&true) && kinds.contains(&false) && wide_ok && secs < 60.0,
        format!("{} fixtures valid, M=5000 N=14 learned in {secs:.2}s {}", fx.len() - bad.len(), bad.join("; ")),
    )
}

fn normalization(fx: &[Fixture]) -> Outcome {
    let mut worst: f64 = 0.0;
    for f in fx {
        let all = log_evaluate(&f.model, &Evidence::marginal(f.model.n_vars())).map_err(|e| e.to_string())?;
        worst = worst.max((all.exp() - 1.0).abs()).max((f.model.total_mass() - 1.0).abs());
    }

    // Two-variable network: numeric integration of the joint against the
    // marginal queries.
    let model = &fx.iter().find(|f| f.name == "mixture").expect("mixture fixture").model;
    let gq = variable_grid(model, 1, 1500).map_err(|e| e.to_string())?;
    let mut worst_rel: f64 = 0.0;
    for x in [-4.0, -3.2, 0.0, 3.5, 4.4] {
        let marginal = log_evaluate(model, &Evidence::marginal(2).with(0, x)).map_err(|e| e.to_string())?.exp();
        let integral: f64 = gq
            .points
            .iter()
            .map(|&y| log_evaluate(model, &Evidence::complete(&[x, y])).unwrap().exp() * gq.measure)
            .sum();
        if marginal > 0.0 {
            worst_rel = worst_rel.max(((integral - marginal) / marginal).abs());
        }
    }
    let coarse_p = variable_grid(model, 0, 400).map_err(|e| e.to_string())?;
    let coarse_q = variable_grid(model, 1, 400).map_err(|e| e.to_string())?;
    let mut total = 0.0;
    for &x in &coarse_p.points {
        for &y in &coarse_q.points {
            total += log_evaluate(model, &Evidence::complete(&[x, y])).unwrap().exp();
        }
    }
    total *= coarse_p.measure * coarse_q.measure;
    worst_rel = worst_rel.max((total - 1.0).abs());
    check(
        worst <= 1e-12 && worst_rel <= 1e-3,
        format!("max |Z - 1| = {worst:.1e}, integration rel err = {worst_rel:.1e}"),
    )
}

fn two_col(a: Vec<f64>, b: Vec<f64>) -> Dataset {
    let spec = |n: &str| ColumnSpec { name: n.into(), column_type: ColumnType::Continuous, categories: None };
    Dataset::from_columns(Schema::new(vec![spec("a"), spec("b")]).unwrap(), vec![a, b]).unwrap()
}

fn rdc_power() -> Outcome {
    let config = LearnConfig::default();
    let (mut indep_ok, mut square_ok, mut exact) = (0, 0, true);
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(1000 + seed);
        let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();

        let indep = two_col(x.clone(), z.clone());
        let r = rdc(&indep, 0, 1, &config, seed).map_err(|e| e.to_string())?;
        indep_ok += usize::from(r < 0.15);
        let sq = two_col(x.clone(), y.clone());
        let s = rdc(&sq, 0, 1, &config, seed).map_err(|e| e.to_string())?;
        square_ok += usize::from(s > 0.8);

        let swapped = rdc(&sq, 1, 0, &config, seed).map_err(|e| e.to_string())?;
        let warped = two_col(x.iter().map(|v| v.exp()).collect(), y.iter().map(|v| 3.0 * v + 7.0).collect());
        let w = rdc(&warped, 0, 1, &config, seed).map_err(|e| e.to_string())?;
        let r_swapped = rdc(&indep, 1, 0, &config, seed).map_err(|e| e.to_string())?;
        exact &= s.to_bits() == swapped.to_bits() && s.to_bits() == w.to_bits() && r.to_bits() == r_swapped.to_bits();
    }
    check(
        indep_ok >= 95 && square_ok >= 95 && exact,
        format!("independent < 0.15: {indep_ok}/100, X^2 > 0.8: {square_ok}/100, bit-exact symmetry/invariance: {exact}"),
    )
}

fn lift() -> Outcome {
    let train = synth::planted(5000, 11);
    let test = synth::planted(2000, 12);
    let model = learn(&train);
    let leaves: Vec<HistogramLeaf> = (0..train.n_vars())
        .map(|v| fit_histogram(v, train.column(v), train.stat_type(v), 1.0).unwrap())
        .collect();
    let (mut ours, mut base) = (0.0, 0.0);
    for r in 0..test.n_rows() {
        let row = test.row(r);
        ours += log_evaluate(&model, &Evidence::complete(&row)).map_err(|e| e.to_string())?;
        base += leaves.iter().zip(&row).map(|(h, &x)| h.density(x).ln()).sum::<f64>();
    }
    let n = test.n_rows() as f64;
    let (ours, base) = (ours / n, base / n);
    check(
        ours - base >= 0.1,
        format!("MSPN {ours:.4} vs factorized histograms {base:.4} nats/row, lift {:.4}", ours - base),
    )
}

fn inference_identities(fx: &[Fixture]) -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0usize;
    let mut worst_visits: f64 = 0.0;
    for (k, f) in fx.iter().enumerate() {
        let m = &f.model;
        let n = m.n_vars();
        let row = f.data.row(k);
        let given = Evidence::marginal(n).with(0, row[0]);
        let query = Evidence::marginal(n).with(n - 1, row[n - 1]);
        let cond = log_conditional(m, &query, &given).map_err(|e| e.to_string())?;
        let joint = log_evaluate(m, &query.merge(&given).unwrap()).unwrap();
        let denom = log_evaluate(m, &given).unwrap();
        worst_ratio = worst_ratio.max((cond - (joint - denom)).abs());

        let mut rng = rng_from_seed(500 + k as u64);
        for evidence in [Evidence::marginal(n), given.clone()] {
            let (_, best, stats) = mpe_with_stats(m, &evidence).map_err(|e| e.to_string())?;
            worst_visits = worst_visits.max(stats.visits as f64 / m.n_nodes() as f64);
            for _ in 0..1000 {
                let (s, stats) = sample_with_stats(m, &evidence, &mut rng).map_err(|e| e.to_string())?;
                worst_visits = worst_visits.max(stats.visits as f64 / m.n_nodes() as f64);
                let v = log_evaluate(m, &s.to_evidence()).unwrap();
                if v > best + 1e-9 {
                    violations += 1;
                }
            }
        }
        let (_, stats) = log_evaluate_with_stats(m, &Evidence::complete(&row)).unwrap();
        worst_visits = worst_visits.max(stats.visits as f64 / m.n_nodes() as f64);
    }
    check(
        worst_ratio <= 1e-12 && violations == 0 && worst_visits <= 2.0,
        format!(
            "ratio identity err {worst_ratio:.1e}, samples beating MPE {violations}/{}, max visits/nodes {worst_visits:.2}",
            fx.len() * 2000
        ),
    )
}

fn network_cdf(m: &Mspn, x: f64) -> f64 {
    let mut cdf = vec![0.0; m.n_nodes()];
    for &id in m.post_order() {
        cdf[id] = match &m.node(id).kind {
            NodeKind::Leaf { leaf } => leaf.cdf(x),
            NodeKind::Sum { weights, children } => weights.iter().zip(children).map(|(w, &c)| w * cdf[c]).sum(),
            NodeKind::Product { children } => children.iter().map(|&c| cdf[c]).product(),
        };
    }
    cdf[m.root()]
}

fn sampling_fidelity() -> Outcome {
    const N: usize = 50_000;
    let critical = 1.628 / (N as f64).sqrt();
    let mut details = Vec::new();
    let mut ok = true;
    let mixture = synth::mixture(10_000, 4);
    let spec = ColumnSpec { name: "v".into(), column_type: ColumnType::Continuous, categories: None };
    let mut rng = rng_from_seed(99);
    let skewed: Vec<f64> = (0..3000).map(|_| -rng.random::<f64>().ln()).collect();
    let one_d = [
        ("bimodal", mixture.column(0).to_vec()),
        ("exponential", skewed),
    ];
    for (name, col) in one_d {
        let data = Dataset::from_columns(Schema::new(vec![spec.clone()]).unwrap(), vec![col]).unwrap();
        let m = learn(&data);
        let ev = Evidence::marginal(1);
        let mut xs: Vec<f64> = (0..N).map(|_| sample(&m, &ev, &mut rng).unwrap().values()[0]).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = network_cdf(&m, x);
                (f - i as f64 / N as f64).abs().max(((i + 1) as f64 / N as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        ok &= d < critical;
        details.push(format!("{name} KS {d:.4} (< {critical:.4})"));
    }

    // Hand-built two-component 1-d mixture: component frequencies against
    // the sum weights.
    let tent = |a: f64| MspnNode {
        scope: vec![0],
        kind: NodeKind::Leaf {
            leaf: PiecewiseDensity::PiecewiseLinear(PiecewiseLinearLeaf {
                variable: 0,
                stat_type: StatType::Continuous,
                knots_x: vec![a - 1.0, a, a + 1.0],
                knots_y: vec![0.0, 1.0, 0.0],
                mode_index: 1,
            }),
        },
    };
    let nodes = vec![
        MspnNode { scope: vec![0], kind: NodeKind::Sum { weights: vec![0.3, 0.7], children: vec![1, 2] } },
        tent(-2.0),
        tent(2.0),
    ];
    let m = Mspn::from_nodes(Schema::new(vec![spec]).unwrap(), LearnConfig::default(), nodes, 0).unwrap();
    let ev = Evidence::marginal(1);
    let first = (0..N).filter(|_| sample(&m, &ev, &mut rng).unwrap().values()[0] < 0.0).count() as f64 / N as f64;
    ok &= (first - 0.3).abs() <= 0.01;
    details.push(format!("sum weight 0.3 sampled at {first:.4}"));

    // Learned two-component fixture: the model's share of the first
    // planted component.
    let m = learn(&mixture);
    let ev = Evidence::marginal(2);
    let freq = (0..N).filter(|_| sample(&m, &ev, &mut rng).unwrap().values()[0] < 0.0).count() as f64 / N as f64;
    ok &= (freq - synth::MIXTURE_WEIGHT).abs() <= 0.01;
    let root = match &m.node(m.root()).kind {
        NodeKind::Sum { weights, .. } => format!("{weights:.3?}"),
        _ => "not a sum".into(),
    };
    details.push(format!(
        "learned mixture component share {freq:.4} (planted {}), root weights {root}",
        synth::MIXTURE_WEIGHT
    ));
    check(ok, details.join(", "))
}

fn cat_leaf(var: usize, masses: [f64; 2]) -> MspnNode {
    MspnNode {
        scope: vec![var],
        kind: NodeKind::Leaf {
            leaf: PiecewiseDensity::Histogram(HistogramLeaf {
                variable: var,
                stat_type: StatType::Categorical { arity: 2 },
                bin_edges: vec![0.0, 1.0, 2.0],
                masses: masses.to_vec(),
                delta: 0.0,
                unseen_mass: 0.0,
            }),
        },
    }
}

fn mi_correctness() -> Outcome {
    let spec = |n: &str| ColumnSpec {
        name: n.into(),
        column_type: ColumnType::Categorical,
        categories: Some(vec!["0".into(), "1".into()]),
    };
    let nodes = vec![
        MspnNode { scope: vec![0, 1], kind: NodeKind::Sum { weights: vec![0.5, 0.5], children: vec![1, 4] } },
        MspnNode { scope: vec![0, 1], kind: NodeKind::Product { children: vec![2, 3] } },
        cat_leaf(0, [1.0, 0.0]),
        cat_leaf(1, [1.0, 0.0]),
        MspnNode { scope: vec![0, 1], kind: NodeKind::Product { children: vec![5, 6] } },
        cat_leaf(0, [0.0, 1.0]),
        cat_leaf(1, [0.0, 1.0]),
    ];
    let dup = Mspn::from_nodes(Schema::new(vec![spec("a"), spec("b")]).unwrap(), LearnConfig::default(), nodes, 0)
        .map_err(|e| e.to_string())?;
    let d = mutual_information(&dup, 0, 1, DEFAULT_GRID).map_err(|e| e.to_string())?;

    let model = learn(&synth::planted(5000, 21));
    let mut independent = Vec::new();
    if let NodeKind::Product { children } = &model.node(model.root()).kind {
        for (a, &ca) in children.iter().enumerate() {
            for &cb in &children[a + 1..] {
                for &i in &model.node(ca).scope {
                    for &j in &model.node(cb).scope {
                        independent.push(mutual_information(&model, i, j, DEFAULT_GRID).map_err(|e| e.to_string())?.mi);
                    }
                }
            }
        }
    }
    let worst_indep = independent.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let graph = mi_graph(&model, DEFAULT_GRID, 0.01).map_err(|e| e.to_string())?;
    let top = graph.pairs.iter().max_by(|a, b| a.nmi.total_cmp(&b.nmi)).expect("pairs");
    check(
        !independent.is_empty()
            && worst_indep < 1e-6
            && (d.mi - 2f64.ln()).abs() <= 1e-3
            && (d.nmi - 1.0).abs() <= 1e-3
            && (top.i, top.j) == (0, 1),
        format!(
            "{} separated pairs, max |MI| {worst_indep:.1e}; duplicated binary MI {:.6} (ln 2 = {:.6}), nmi {:.4}; top pair ({}, {}) nmi {:.3}",
            independent.len(),
            d.mi,
            2f64.ln(),
            d.nmi,
            graph.nodes[top.i],
            graph.nodes[top.j],
            top.nmi
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = synth::planted(3000, 5);
    let csv = dir.path().join("planted.csv");
    let schema = dir.path().join("planted.schema.json");
    write_csv(&data, std::fs::File::create(&csv).unwrap()).map_err(|e| e.to_string())?;
    std::fs::write(&schema, data.schema().to_json()).unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("model{k}.json"));
        let argv = ["mspn", "learn", "--data", csv.to_str().unwrap(), "--schema", schema.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7"];
        let code = mspn_cli::run_with(argv, &mut Vec::new(), &mut Vec::new());
        if code != 0 {
            return Err(format!("learn exited with {code}"));
        }
        files.push(std::fs::read(&out).unwrap());
    }
    let identical = files[0] == files[1];

    let model = deserialize(std::str::from_utf8(&files[0]).unwrap()).map_err(|e| e.to_string())?;
    let back = deserialize(&serialize(&model)).map_err(|e| e.to_string())?;
    let mut rng = rng_from_seed(8);
    let mut mismatches = 0;
    for _ in 0..100 {
        let r = rng.random_range(0..data.n_rows());
        let states = (0..data.n_vars())
            .map(|v| if rng.random_bool(0.3) { VarState::Marginalized } else { VarState::Observed(data.value(r, v)) })
            .collect();
        let ev = Evidence::from_states(states);
        let a = log_evaluate(&model, &ev).unwrap();
        let b = log_evaluate(&back, &ev).unwrap();
        mismatches += usize::from(a.to_bits() != b.to_bits());
    }
    check(
        identical && mismatches == 0,
        format!("seed-7 model files identical: {identical}, round-trip bit mismatches {mismatches}/100"),
    )
}

fn leaf_quality(fx: &[Fixture]) -> Outcome {
    let mut rng = rng_from_seed(2025);
    let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    let h = fit_histogram(0, &xs, StatType::Continuous, 0.0).map_err(|e| e.to_string())?;
    let worst = (0..h.masses.len())
        .map(|b| (h.masses[b] / (h.bin_edges[b + 1] - h.bin_edges[b]) - 1.0).abs())
        .fold(0.0, f64::max);

    let tent = PiecewiseDensity::PiecewiseLinear(PiecewiseLinearLeaf {
        variable: 0,
        stat_type: StatType::Continuous,
        knots_x: vec![0.0, 1.0, 2.0],
        knots_y: vec![0.0, 1.0, 0.0],
        mode_index: 1,
    });
    let mean = (0..50_000).map(|_| tent.sample(&mut rng)).sum::<f64>() / 50_000.0;

    let mut pwl = 0;
    let mut unimodal = true;
    for f in fx {
        for leaf in f.model.leaves() {
            if let PiecewiseDensity::PiecewiseLinear(p) = leaf {
                pwl += 1;
                unimodal &= p.is_unimodal();
            }
        }
    }
    check(
        worst <= 0.15 && (mean - 1.0).abs() <= 0.01 && unimodal && pwl > 0,
        format!(
            "uniform histogram: {} bins, max density deviation {:.3}; tent mean {mean:.4}; {pwl} isotonic leaves unimodal: {unimodal}",
            h.masses.len(),
            worst
        ),
    )
}

fn main() {
    let fx = fixtures();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("validity suite", Box::new(|| validity(&fx))),
        ("normalization", Box::new(|| normalization(&fx))),
        ("RDC statistical power", Box::new(rdc_power)),
        ("density-estimation lift", Box::new(lift)),
        ("inference identities", Box::new(|| inference_identities(&fx))),
        ("sampling fidelity", Box::new(sampling_fidelity)),
        ("MI correctness", Box::new(mi_correctness)),
        ("determinism", Box::new(determinism)),
        ("leaf quality", Box::new(|| leaf_quality(&fx))),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
