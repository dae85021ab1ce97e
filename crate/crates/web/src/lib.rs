//! Browser bindings for three interactive views: leaf fitting, the
//! dependence coefficient, and a learned two-dimensional network.
//!
//! Each exported function returns a JSON document; failures are reported
//! as `{"error": "..."}` so the page never has to catch exceptions.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use mspn::data::{ColumnSpec, ColumnType, Dataset, Schema, StatType};
use mspn::inference::{log_evaluate, sample, Evidence};
use mspn::leaves::{fit_histogram, fit_isotonic_pwl, HistogramLeaf, PiecewiseDensity};
use mspn::numerics::{rng_from_seed, SeededRng};
use mspn::rdc::rdc;
use mspn::structure::{learn_mspn, LearnConfig};

const MAX_ROWS: usize = 20_000;

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).expect("view serializes"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

fn check_rows(n: usize) -> Result<(), String> {
    if n < 2 || n > MAX_ROWS {
        return Err(format!("sample size must lie in 2..={MAX_ROWS}"));
    }
    Ok(())
}

fn normal(rng: &mut SeededRng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("valid normal").sample(rng)
}

#[derive(Debug, Serialize)]
pub struct LeafView {
    pub values: Vec<f64>,
    pub discrete: bool,
    pub bin_edges: Vec<f64>,
    pub bin_densities: Vec<f64>,
    pub knots_x: Vec<f64>,
    pub knots_y: Vec<f64>,
    pub histogram_mode: f64,
    pub isotonic_mode: f64,
}

/// Draws `n` values from a named distribution and fits both leaf kinds.
pub fn leaf_fit(distribution: &str, n: usize, delta: f64, seed: u64) -> Result<LeafView, String> {
    check_rows(n)?;
    if !(delta >= 0.0) {
        return Err("smoothing must be >= 0".into());
    }
    let mut rng = rng_from_seed(seed);
    let (values, stat_type): (Vec<f64>, StatType) = match distribution {
        "bimodal" => (
            (0..n)
                .map(|_| if rng.random_bool(0.35) { normal(&mut rng, -2.0, 0.6) } else { normal(&mut rng, 1.5, 1.0) })
                .collect(),
            StatType::Continuous,
        ),
        "skewed" => ((0..n).map(|_| normal(&mut rng, 0.0, 0.7).exp()).collect(), StatType::Continuous),
        "uniform" => ((0..n).map(|_| rng.random::<f64>()).collect(), StatType::Continuous),
        "counts" => {
            let p = Poisson::new(3.5).expect("valid rate");
            ((0..n).map(|_| p.sample(&mut rng)).collect(), StatType::DiscreteNumeric)
        }
        other => return Err(format!("unknown distribution `{other}`")),
    };
    let hist: HistogramLeaf = fit_histogram(0, &values, stat_type, delta).map_err(|e| e.to_string())?;
    let pwl = fit_isotonic_pwl(0, &values, stat_type, delta).map_err(|e| e.to_string())?;
    let bin_densities = (0..hist.n_bins())
        .map(|b| hist.masses[b] / (hist.bin_edges[b + 1] - hist.bin_edges[b]))
        .collect();
    let histogram_mode = hist.mode();
    let isotonic_mode = PiecewiseDensity::PiecewiseLinear(pwl.clone()).mode();
    Ok(LeafView {
        values,
        discrete: stat_type == StatType::DiscreteNumeric,
        bin_edges: hist.bin_edges,
        bin_densities,
        knots_x: pwl.knots_x,
        knots_y: pwl.knots_y,
        histogram_mode,
        isotonic_mode,
    })
}

#[derive(Debug, Serialize)]
pub struct RdcView {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rdc: f64,
    /// Absolute Pearson correlation, for contrast.
    pub pearson: f64,
}

fn two_columns(x: Vec<f64>, y: Vec<f64>) -> Result<Dataset, String> {
    let col = |name: &str| ColumnSpec { name: name.into(), column_type: ColumnType::Continuous, categories: None };
    let schema = Schema::new(vec![col("x"), col("y")]).map_err(|e| e.to_string())?;
    Dataset::from_columns(schema, vec![x, y]).map_err(|e| e.to_string())
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).abs()
    }
}

/// Generates a noisy relation `y = f(x)` and measures its dependence.
pub fn rdc_explore(relation: &str, n: usize, noise: f64, seed: u64) -> Result<RdcView, String> {
    check_rows(n)?;
    if !(noise >= 0.0) {
        return Err("noise must be >= 0".into());
    }
    let mut rng = rng_from_seed(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let t: f64 = rng.random_range(-1.0..1.0);
        let e = noise * normal(&mut rng, 0.0, 1.0);
        let (a, b) = match relation {
            "independent" => (t, rng.random_range(-1.0..1.0)),
            "linear" => (t, t + e),
            "quadratic" => (t, t * t + e),
            "sine" => (t, (3.0 * std::f64::consts::PI * t).sin() + e),
            "circle" => {
                let angle = std::f64::consts::PI * t;
                (angle.cos() + e, angle.sin() + noise * normal(&mut rng, 0.0, 1.0))
            }
            "step" => (t, if t > 0.0 { 1.0 } else { 0.0 } + e),
            other => return Err(format!("unknown relation `{other}`")),
        };
        x.push(a);
        y.push(b);
    }
    let data = two_columns(x.clone(), y.clone())?;
    let value = rdc(&data, 0, 1, &LearnConfig::default(), seed).map_err(|e| e.to_string())?;
    Ok(RdcView { pearson: pearson(&x, &y), x, y, rdc: value })
}

#[derive(Debug, Serialize)]
pub struct DensityView {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub grid: usize,
    /// Row-major log densities, rows indexed by y from bottom to top.
    /// Zero densities serialize as `null`.
    pub log_density: Vec<f64>,
    pub data: Vec<(f64, f64)>,
    pub samples: Vec<(f64, f64)>,
    pub sums: usize,
    pub products: usize,
    pub leaves: usize,
    pub depth: usize,
    pub train_loglik: f64,
}

fn shape_data(shape: &str, n: usize, rng: &mut SeededRng) -> Result<Vec<(f64, f64)>, String> {
    (0..n)
        .map(|_| {
            Ok(match shape {
                "blobs" => {
                    let c = rng.random_range(0..3);
                    let (cx, cy) = [(-2.0, -1.5), (2.0, -1.0), (0.0, 2.0)][c];
                    (normal(rng, cx, 0.6), normal(rng, cy, 0.6))
                }
                "ring" => {
                    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let r = normal(rng, 2.0, 0.2);
                    (r * a.cos(), r * a.sin())
                }
                "moons" => {
                    let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    if rng.random_bool(0.5) {
                        (a.cos() + normal(rng, 0.0, 0.1), a.sin() + normal(rng, 0.0, 0.1))
                    } else {
                        (1.0 - a.cos() + normal(rng, 0.0, 0.1), 0.5 - a.sin() + normal(rng, 0.0, 0.1))
                    }
                }
                "diagonal" => {
                    let t = normal(rng, 0.0, 1.0);
                    (t, 0.8 * t + normal(rng, 0.0, 0.4))
                }
                other => return Err(format!("unknown shape `{other}`")),
            })
        })
        .collect()
}

/// Learns a network on a two-dimensional point cloud and evaluates its
/// density on a `grid x grid` lattice.
pub fn mspn_density(shape: &str, n: usize, eta: usize, seed: u64, grid: usize) -> Result<DensityView, String> {
    check_rows(n)?;
    if !(4..=200).contains(&grid) {
        return Err("grid must lie in 4..=200".into());
    }
    let mut rng = rng_from_seed(seed);
    let points = shape_data(shape, n, &mut rng)?;
    let data = two_columns(points.iter().map(|p| p.0).collect(), points.iter().map(|p| p.1).collect())?;
    let config = LearnConfig { eta, seed, ..LearnConfig::default() };
    let model = learn_mspn(&data, &config).map_err(|e| e.to_string())?;

    let bounds = |col: &[f64]| {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.1 * (hi - lo).max(1e-9);
        (lo - pad, hi + pad)
    };
    let (x_range, y_range) = (bounds(data.column(0)), bounds(data.column(1)));
    let step = |(lo, hi): (f64, f64), i: usize| lo + (i as f64 + 0.5) * (hi - lo) / grid as f64;
    let mut log_density = Vec::with_capacity(grid * grid);
    for r in 0..grid {
        for c in 0..grid {
            let ev = Evidence::complete(&[step(x_range, c), step(y_range, r)]);
            log_density.push(log_evaluate(&model, &ev).map_err(|e| e.to_string())?);
        }
    }
    let marginal = Evidence::marginal(2);
    let samples = (0..n.min(1000))
        .map(|_| sample(&model, &marginal, &mut rng).map(|a| (a.values()[0], a.values()[1])))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let train_loglik = points
        .iter()
        .map(|&(x, y)| log_evaluate(&model, &Evidence::complete(&[x, y])).unwrap_or(f64::NEG_INFINITY))
        .sum::<f64>()
        / n as f64;
    let (sums, products, leaves) = model.count_kinds();
    Ok(DensityView {
        x_range,
        y_range,
        grid,
        log_density,
        data: points,
        samples,
        sums,
        products,
        leaves,
        depth: model.depth(),
        train_loglik,
    })
}

#[wasm_bindgen]
pub fn leaf_fit_json(distribution: &str, n: usize, delta: f64, seed: u32) -> String {
    to_json(leaf_fit(distribution, n, delta, seed as u64))
}

#[wasm_bindgen]
pub fn rdc_json(relation: &str, n: usize, noise: f64, seed: u32) -> String {
    to_json(rdc_explore(relation, n, noise, seed as u64))
}

#[wasm_bindgen]
pub fn mspn_density_json(shape: &str, n: usize, eta: usize, seed: u32, grid: usize) -> String {
    to_json(mspn_density(shape, n, eta, seed as u64, grid))
}
