//! Seeded synthetic datasets with known dependency structure, used by the
//! test suites, the benchmarks and the demo page.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::data::{ColumnSpec, ColumnType, Dataset, Schema};
use crate::numerics::{rng_from_seed, SeededRng};

fn continuous(name: &str) -> ColumnSpec {
    ColumnSpec { name: name.into(), column_type: ColumnType::Continuous, categories: None }
}

fn discrete(name: &str) -> ColumnSpec {
    ColumnSpec { name: name.into(), column_type: ColumnType::Discrete, categories: None }
}

fn categorical(name: &str, labels: &[&str]) -> ColumnSpec {
    ColumnSpec {
        name: name.into(),
        column_type: ColumnType::Categorical,
        categories: Some(labels.iter().map(|s| s.to_string()).collect()),
    }
}

fn build(columns: Vec<ColumnSpec>, rows: Vec<Vec<f64>>) -> Dataset {
    let schema = Schema::new(columns).expect("fixture schema");
    Dataset::from_rows(schema, &rows).expect("fixture rows")
}

fn normal(rng: &mut SeededRng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("valid normal").sample(rng)
}

fn pick(rng: &mut SeededRng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Four continuous variables: a correlated Gaussian pair, a uniform and an
/// exponential.
pub fn pure_continuous(m: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let exp = Exp::new(1.0).expect("valid rate");
    let rows = (0..m)
        .map(|_| {
            let a = normal(&mut rng, 0.0, 1.0);
            let b = 0.8 * a + normal(&mut rng, 0.0, 0.6);
            let u: f64 = rng.random();
            vec![a, b, u, exp.sample(&mut rng)]
        })
        .collect();
    build(vec![continuous("a"), continuous("b"), continuous("u"), continuous("e")], rows)
}

/// Three categorical variables; `colour` drives `size`, `shape` is free.
pub fn pure_categorical(m: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let rows = (0..m)
        .map(|_| {
            let colour = pick(&mut rng, &[0.5, 0.3, 0.2]);
            let size = match colour {
                0 => pick(&mut rng, &[0.8, 0.2]),
                1 => pick(&mut rng, &[0.3, 0.7]),
                _ => pick(&mut rng, &[0.5, 0.5]),
            };
            let shape = pick(&mut rng, &[0.25, 0.25, 0.25, 0.25]);
            vec![colour as f64, size as f64, shape as f64]
        })
        .collect();
    build(
        vec![
            categorical("colour", &["red", "green", "blue"]),
            categorical("size", &["small", "large"]),
            categorical("shape", &["circle", "square", "star", "cross"]),
        ],
        rows,
    )
}

/// Continuous, discrete and categorical columns with a class-driven
/// dependency.
pub fn hybrid(m: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let rows = (0..m)
        .map(|_| {
            let class = pick(&mut rng, &[0.6, 0.4]);
            let height = normal(&mut rng, if class == 0 { 165.0 } else { 178.0 }, 7.0);
            let lambda = if class == 0 { 2.0 } else { 5.0 };
            let visits: f64 = Poisson::new(lambda).expect("valid rate").sample(&mut rng);
            let noise = normal(&mut rng, 0.0, 1.0);
            vec![class as f64, height, visits, noise]
        })
        .collect();
    build(
        vec![categorical("class", &["f", "m"]), continuous("height"), discrete("visits"), continuous("noise")],
        rows,
    )
}

/// Six mixed variables. `(x, y)` is the strongly planted pair; `group`
/// shifts `z` and `count` more weakly; `w` is independent of everything.
pub fn planted(m: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let rows = (0..m)
        .map(|_| {
            let x = normal(&mut rng, 0.0, 1.0);
            let y = x + normal(&mut rng, 0.0, 0.3);
            let group = pick(&mut rng, &[0.5, 0.5]);
            let z = normal(&mut rng, if group == 0 { -0.75 } else { 0.75 }, 1.0);
            let count: f64 = Poisson::new(if group == 0 { 2.0 } else { 4.0 }).expect("valid rate").sample(&mut rng);
            let w: f64 = rng.random_range(-1.0..1.0);
            vec![x, y, group as f64, z, count, w]
        })
        .collect();
    build(
        vec![
            continuous("x"),
            continuous("y"),
            categorical("group", &["g0", "g1"]),
            continuous("z"),
            discrete("count"),
            continuous("w"),
        ],
        rows,
    )
}

/// Weight of the first component of [`mixture`].
pub const MIXTURE_WEIGHT: f64 = 0.3;

/// Two well separated product components over two continuous variables.
/// Exactly `round(0.3 m)` rows come from the first component; row order is
/// shuffled.
pub fn mixture(m: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let first = (MIXTURE_WEIGHT * m as f64).round() as usize;
    let mut rows: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let (cx, cy) = if r < first { (-4.0, 3.0) } else { (4.0, -3.0) };
            vec![normal(&mut rng, cx, 1.0), normal(&mut rng, cy, 1.0)]
        })
        .collect();
    rows.shuffle(&mut rng);
    build(vec![continuous("p"), continuous("q")], rows)
}

/// Fourteen mixed variables built from three latent factors.
pub fn wide(m: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut columns = Vec::new();
    for k in 0..6 {
        columns.push(continuous(&format!("c{k}")));
    }
    for k in 0..4 {
        columns.push(discrete(&format!("d{k}")));
    }
    for k in 0..4 {
        columns.push(categorical(&format!("k{k}"), &["a", "b", "c"]));
    }
    let rows = (0..m)
        .map(|_| {
            let f: Vec<f64> = (0..3).map(|_| normal(&mut rng, 0.0, 1.0)).collect();
            let mut row = Vec::with_capacity(14);
            for k in 0..6 {
                row.push(f[k % 3] + normal(&mut rng, 0.0, 0.7));
            }
            for k in 0..4 {
                let lambda = (1.0 + f[k % 3]).exp().min(30.0);
                row.push(Poisson::new(lambda).expect("valid rate").sample(&mut rng));
            }
            for k in 0..4 {
                let t = f[k % 3];
                let class = if t < -0.5 { 0 } else if t < 0.5 { 1 } else { 2 };
                let class = if rng.random_bool(0.2) { rng.random_range(0..3) } else { class };
                row.push(class as f64);
            }
            row
        })
        .collect();
    build(columns, rows)
}

/// The six fixture datasets used by the validity suite, by name.
pub fn fixtures(m: usize, seed: u64) -> Vec<(&'static str, Dataset)> {
    vec![
        ("pure_continuous", pure_continuous(m, seed)),
        ("pure_categorical", pure_categorical(m, seed)),
        ("hybrid", hybrid(m, seed)),
        ("planted", planted(m, seed)),
        ("mixture", mixture(m, seed)),
        ("wide", wide(m, seed)),
    ]
}
