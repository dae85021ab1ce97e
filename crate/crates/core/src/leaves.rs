//! Univariate leaf distributions: adaptive histograms with Laplace
//! smoothing, and unimodal piecewise-linear densities fitted by isotonic
//! regression on top of them.
//!
//! Continuous leaves report densities. Discrete-numeric leaves report the
//! probability mass of an integer; their bins are aligned on half-integers
//! so that `mass / width` is the per-integer mass. Categorical leaves keep
//! one unit bin per category.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::StatType;
use crate::error::{MspnError, Result};
use crate::numerics::{integrate_pwl, pava_monotone, Monotone};

/// Upper bound on candidate cut points considered by the binning search.
pub const MAX_CANDIDATE_CUTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafKind {
    Histogram,
    #[default]
    Isotonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramLeaf {
    pub variable: usize,
    pub stat_type: StatType,
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub delta: f64,
    /// Mass given to a category outside the vocabulary (categorical only).
    #[serde(default)]
    pub unseen_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearLeaf {
    pub variable: usize,
    pub stat_type: StatType,
    pub knots_x: Vec<f64>,
    pub knots_y: Vec<f64>,
    pub mode_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PiecewiseDensity {
    Histogram(HistogramLeaf),
    PiecewiseLinear(PiecewiseLinearLeaf),
}

/// Fits the leaf for one variable: categorical variables always get a
/// histogram, ordered ones follow `kind`.
pub fn fit_leaf(variable: usize, column: &[f64], stat_type: StatType, delta: f64, kind: LeafKind) -> Result<PiecewiseDensity> {
    fit_leaf_in(variable, column, stat_type, delta, kind, None)
}

/// Like [`fit_leaf`], but with `delta > 0` the smoothing tails reach out to
/// cover `domain`, the range of the variable over the whole dataset.
pub fn fit_leaf_in(
    variable: usize,
    column: &[f64],
    stat_type: StatType,
    delta: f64,
    kind: LeafKind,
    domain: Option<(f64, f64)>,
) -> Result<PiecewiseDensity> {
    match (kind, stat_type) {
        (LeafKind::Isotonic, StatType::Continuous | StatType::DiscreteNumeric) => {
            let hist = fit_histogram(variable, column, stat_type, delta)?;
            let mut pwl = isotonic_from_histogram(&hist);
            if let (Some(domain), true) = (domain, delta > 0.0) {
                let floor = delta / (column.len() as f64 + delta * (hist.n_bins() + 2) as f64);
                pwl.extend_to(domain, floor);
            }
            Ok(PiecewiseDensity::PiecewiseLinear(pwl))
        }
        _ => fit_histogram_in(variable, column, stat_type, delta, domain).map(PiecewiseDensity::Histogram),
    }
}

/// Penalty for a histogram of `bins` bins whose `bins - 1` inner edges
/// were chosen among `candidates` possible cut points.
pub fn bin_penalty(bins: usize, candidates: usize) -> f64 {
    let b = bins as f64;
    ln_choose(candidates, bins - 1) + b - 1.0 + b.ln().powf(2.5)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    (0..k).map(|i| ((n - i) as f64 / (k - i) as f64).ln()).sum()
}

pub fn fit_histogram(variable: usize, column: &[f64], stat_type: StatType, delta: f64) -> Result<HistogramLeaf> {
    fit_histogram_in(variable, column, stat_type, delta, None)
}

pub fn fit_histogram_in(
    variable: usize,
    column: &[f64],
    stat_type: StatType,
    delta: f64,
    domain: Option<(f64, f64)>,
) -> Result<HistogramLeaf> {
    if column.is_empty() {
        return Err(MspnError::EmptyInput("histogram of an empty column"));
    }
    if !(delta >= 0.0) {
        return Err(MspnError::Domain(format!("smoothing factor {delta} must be >= 0")));
    }
    let m = column.len() as f64;

    if let StatType::Categorical { arity } = stat_type {
        let mut counts = vec![0usize; arity];
        for &v in column {
            if v < 0.0 || v.fract() != 0.0 || v as usize >= arity {
                return Err(MspnError::Domain(format!("category index {v} outside 0..{arity}")));
            }
            counts[v as usize] += 1;
        }
        let denom = m + delta * arity as f64;
        return Ok(HistogramLeaf {
            variable,
            stat_type,
            bin_edges: (0..=arity).map(|i| i as f64).collect(),
            masses: counts.iter().map(|&c| (c as f64 + delta) / denom).collect(),
            delta,
            unseen_mass: delta / (m + delta * (arity as f64 + 1.0)),
        });
    }

    let discrete = stat_type == StatType::DiscreteNumeric;
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut unique = sorted.clone();
    unique.dedup();

    if unique.len() == 1 {
        let v = unique[0];
        let mut edges = vec![v - 0.5, v + 0.5];
        let mut counts = vec![column.len()];
        if let (Some((d0, d1)), true) = (domain, delta > 0.0) {
            if d0 < edges[0] {
                edges.insert(0, d0);
                counts.insert(0, 0);
            }
            if d1 > edges[edges.len() - 1] {
                edges.push(d1);
                counts.push(0);
            }
        }
        let masses = if counts.len() == 1 {
            vec![1.0]
        } else {
            let denom = m + delta * counts.len() as f64;
            counts.iter().map(|&c| (c as f64 + delta) / denom).collect()
        };
        return Ok(HistogramLeaf {
            variable,
            stat_type,
            bin_edges: edges,
            masses,
            delta,
            unseen_mass: 0.0,
        });
    }

    let (lo, hi, candidates) = if discrete {
        let cuts: Vec<f64> = unique[..unique.len() - 1].iter().map(|v| v + 0.5).collect();
        (unique[0] - 0.5, unique[unique.len() - 1] + 0.5, cuts)
    } else {
        let cuts: Vec<f64> = unique.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        (unique[0], unique[unique.len() - 1], cuts)
    };
    let candidates = subsample_quantiles(&candidates, MAX_CANDIDATE_CUTS);

    let mut positions = Vec::with_capacity(candidates.len() + 2);
    positions.push(lo);
    positions.extend(candidates);
    positions.push(hi);
    let mut edges = best_binning(&sorted, &positions);
    let mut counts = bin_counts(&sorted, &edges);

    if delta > 0.0 {
        let data_bins = edges.len() - 1;
        let mean_width = (hi - lo) / data_bins as f64;
        let tail = if discrete {
            (mean_width / 2.0).round().max(1.0)
        } else {
            mean_width / 2.0
        };
        edges.insert(0, lo - tail);
        edges.push(hi + tail);
        counts.insert(0, 0);
        counts.push(0);
        if let Some((d0, d1)) = domain {
            if d0 < edges[0] {
                edges.insert(0, d0);
                counts.insert(0, 0);
            }
            if d1 > edges[edges.len() - 1] {
                edges.push(d1);
                counts.push(0);
            }
        }
    }

    let denom = m + delta * counts.len() as f64;
    let masses = counts.iter().map(|&c| (c as f64 + delta) / denom).collect();
    Ok(HistogramLeaf {
        variable,
        stat_type,
        bin_edges: edges,
        masses,
        delta,
        unseen_mass: 0.0,
    })
}

fn subsample_quantiles(cuts: &[f64], cap: usize) -> Vec<f64> {
    if cuts.len() <= cap {
        return cuts.to_vec();
    }
    let last = (cuts.len() - 1) as f64;
    let mut out: Vec<f64> = (0..cap)
        .map(|q| {
            let pos = (q as f64 + 0.5) / cap as f64 * last;
            cuts[pos.round() as usize]
        })
        .collect();
    out.dedup();
    out
}

/// Counts of sorted values per bin; bins are half-open except the last.
fn bin_counts(sorted: &[f64], edges: &[f64]) -> Vec<usize> {
    let nb = edges.len() - 1;
    (0..nb)
        .map(|b| {
            let start = sorted.partition_point(|&v| v < edges[b]);
            let end = if b + 1 == nb {
                sorted.partition_point(|&v| v <= edges[b + 1])
            } else {
                sorted.partition_point(|&v| v < edges[b + 1])
            };
            end - start
        })
        .collect()
}

/// Dynamic program over subsets of candidate positions maximizing the
/// penalized histogram log-likelihood. Returns the chosen edges, always
/// including the first and last position.
fn best_binning(sorted: &[f64], positions: &[f64]) -> Vec<f64> {
    let p = positions.len();
    let m = sorted.len() as f64;
    // cum[i] = number of values strictly below positions[i]; the last
    // position closes the final bin.
    let mut cum: Vec<usize> = positions.iter().map(|&x| sorted.partition_point(|&v| v < x)).collect();
    cum[p - 1] = sorted.len();

    let score = |i: usize, j: usize| -> f64 {
        let n = (cum[j] - cum[i]) as f64;
        if n == 0.0 {
            0.0
        } else {
            n * (n / (m * (positions[j] - positions[i]))).ln()
        }
    };

    let max_bins = p - 1;
    // best[b][j]: best log-likelihood covering [positions[0], positions[j]]
    // with exactly b bins; back[b][j] the previous cut.
    let mut best = vec![vec![f64::NEG_INFINITY; p]; max_bins + 1];
    let mut back = vec![vec![0usize; p]; max_bins + 1];
    for j in 1..p {
        best[1][j] = score(0, j);
    }
    for b in 2..=max_bins {
        for j in b..p {
            let mut top = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in (b - 1)..j {
                let prev = best[b - 1][i];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let s = prev + score(i, j);
                if s > top {
                    top = s;
                    arg = i;
                }
            }
            best[b][j] = top;
            back[b][j] = arg;
        }
    }

    let mut chosen = 1;
    let mut top = f64::NEG_INFINITY;
    for b in 1..=max_bins {
        let s = best[b][p - 1] - bin_penalty(b, p - 2);
        if s > top {
            top = s;
            chosen = b;
        }
    }
    let mut idx = vec![p - 1];
    let mut j = p - 1;
    for b in (2..=chosen).rev() {
        j = back[b][j];
        idx.push(j);
    }
    idx.push(0);
    idx.reverse();
    idx.into_iter().map(|i| positions[i]).collect()
}

pub fn fit_isotonic_pwl(variable: usize, column: &[f64], stat_type: StatType, delta: f64) -> Result<PiecewiseLinearLeaf> {
    if stat_type.is_categorical() {
        return Err(MspnError::Domain("categorical variables use histogram leaves".into()));
    }
    let hist = fit_histogram(variable, column, stat_type, delta)?;
    Ok(isotonic_from_histogram(&hist))
}

/// Unimodal piecewise-linear density through the bin centers of a
/// histogram, monotone up to the densest bin and down after it, with zero
/// density at the outer edges.
pub fn isotonic_from_histogram(hist: &HistogramLeaf) -> PiecewiseLinearLeaf {
    let edges = &hist.bin_edges;
    let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let dens: Vec<f64> = hist.masses.iter().zip(&widths).map(|(m, w)| m / w).collect();
    let mode = argmax_first(&dens);

    let left = pava_monotone(&dens[..=mode], &widths[..=mode], Monotone::Increasing).expect("non-empty prefix");
    let right = pava_monotone(&dens[mode..], &widths[mode..], Monotone::Decreasing).expect("non-empty suffix");
    let mut fitted = left;
    fitted.extend_from_slice(&right[1..]);

    let mut knots_x = Vec::with_capacity(centers.len() + 2);
    knots_x.push(edges[0]);
    knots_x.extend_from_slice(&centers);
    knots_x.push(edges[edges.len() - 1]);
    let mut knots_y = Vec::with_capacity(knots_x.len());
    knots_y.push(0.0);
    knots_y.extend(fitted);
    knots_y.push(0.0);

    let area = integrate_pwl(&knots_x, &knots_y).expect("valid knots");
    if area > 0.0 {
        for y in &mut knots_y {
            *y /= area;
        }
    }
    PiecewiseLinearLeaf {
        variable: hist.variable,
        stat_type: hist.stat_type,
        knots_x,
        knots_y,
        mode_index: mode + 1,
    }
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl HistogramLeaf {
    pub fn n_bins(&self) -> usize {
        self.masses.len()
    }

    fn bin_of(&self, value: f64) -> Option<usize> {
        let e = &self.bin_edges;
        let last = e.len() - 1;
        if !(value >= e[0] && value <= e[last]) {
            return None;
        }
        let b = e.partition_point(|&x| x <= value);
        Some(b.saturating_sub(1).min(last - 1))
    }

    pub fn density(&self, value: f64) -> f64 {
        if let StatType::Categorical { arity } = self.stat_type {
            if value < 0.0 || value.fract() != 0.0 {
                return 0.0;
            }
            let idx = value as usize;
            return if idx < arity { self.masses[idx] } else { self.unseen_mass };
        }
        if self.stat_type == StatType::DiscreteNumeric && value.fract() != 0.0 {
            return 0.0;
        }
        match self.bin_of(value) {
            Some(b) => self.masses[b] / (self.bin_edges[b + 1] - self.bin_edges[b]),
            None => 0.0,
        }
    }

    pub fn mode(&self) -> f64 {
        match self.stat_type {
            StatType::Categorical { .. } => argmax_first(&self.masses) as f64,
            ty => {
                let dens: Vec<f64> = (0..self.n_bins())
                    .map(|b| self.masses[b] / (self.bin_edges[b + 1] - self.bin_edges[b]))
                    .collect();
                let b = argmax_first(&dens);
                if ty == StatType::DiscreteNumeric {
                    self.bin_edges[b] + 0.5
                } else {
                    0.5 * (self.bin_edges[b] + self.bin_edges[b + 1])
                }
            }
        }
    }

    /// P(X <= value).
    pub fn cdf(&self, value: f64) -> f64 {
        let e = &self.bin_edges;
        let mut acc = 0.0;
        for b in 0..self.n_bins() {
            if value >= e[b + 1] {
                acc += self.masses[b];
            } else {
                if value > e[b] {
                    let frac = match self.stat_type {
                        StatType::Continuous => (value - e[b]) / (e[b + 1] - e[b]),
                        // Whole integers covered so far.
                        _ => (value - e[b] + 0.5).floor().max(0.0) / (e[b + 1] - e[b]),
                    };
                    acc += self.masses[b] * frac;
                }
                break;
            }
        }
        acc.min(1.0)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let b = pick_index(&self.masses, rng);
        let (lo, hi) = (self.bin_edges[b], self.bin_edges[b + 1]);
        match self.stat_type {
            StatType::Categorical { .. } => b as f64,
            StatType::DiscreteNumeric => {
                let n = (hi - lo).round().max(1.0) as u64;
                lo + 0.5 + rng.random_range(0..n) as f64
            }
            StatType::Continuous => {
                let x = lo + rng.random::<f64>() * (hi - lo);
                if x < hi { x } else { lo }
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

fn pick_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

impl PiecewiseLinearLeaf {
    /// Adds linear ramps from zero at the ends of `domain` to the current
    /// outer knots, each carrying about `mass`, then renormalizes. Ramp
    /// heights are capped by the neighbouring knot so unimodality holds.
    pub fn extend_to(&mut self, (d0, d1): (f64, f64), mass: f64) {
        if d0 < self.knots_x[0] {
            let height = (2.0 * mass / (self.knots_x[0] - d0)).min(self.knots_y[1]);
            self.knots_y[0] = height;
            self.knots_x.insert(0, d0);
            self.knots_y.insert(0, 0.0);
            self.mode_index += 1;
        }
        let last = self.knots_x.len() - 1;
        if d1 > self.knots_x[last] {
            let height = (2.0 * mass / (d1 - self.knots_x[last])).min(self.knots_y[last - 1]);
            self.knots_y[last] = height;
            self.knots_x.push(d1);
            self.knots_y.push(0.0);
        }
        let total = integrate_pwl(&self.knots_x, &self.knots_y).expect("knots are sorted and paired");
        self.knots_y.iter_mut().for_each(|y| *y /= total);
    }

    fn pdf(&self, x: f64) -> f64 {
        let (xs, ys) = (&self.knots_x, &self.knots_y);
        let last = xs.len() - 1;
        if !(x >= xs[0] && x <= xs[last]) {
            return 0.0;
        }
        let i = xs.partition_point(|&k| k <= x).saturating_sub(1).min(last - 1);
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        ys[i] + t * (ys[i + 1] - ys[i])
    }

    /// Integral of the interpolant from the first knot to `x`.
    fn area_to(&self, x: f64) -> f64 {
        let (xs, ys) = (&self.knots_x, &self.knots_y);
        if x <= xs[0] {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..xs.len() - 1 {
            if x >= xs[i + 1] {
                acc += 0.5 * (xs[i + 1] - xs[i]) * (ys[i] + ys[i + 1]);
            } else {
                acc += 0.5 * (x - xs[i]) * (ys[i] + self.pdf(x));
                break;
            }
        }
        acc
    }

    pub fn density(&self, value: f64) -> f64 {
        match self.stat_type {
            StatType::DiscreteNumeric => {
                if value.fract() != 0.0 {
                    return 0.0;
                }
                (self.area_to(value + 0.5) - self.area_to(value - 0.5)).max(0.0)
            }
            _ => self.pdf(value),
        }
    }

    pub fn mode(&self) -> f64 {
        let peak = self.knots_x[self.mode_index];
        if self.stat_type != StatType::DiscreteNumeric {
            return peak;
        }
        let (lo, hi) = self.support();
        let mut best = (f64::NEG_INFINITY, peak.round());
        let start = (peak.floor() - 1.0).max(lo.ceil());
        let stop = (peak.ceil() + 1.0).min(hi.floor());
        let mut n = start;
        while n <= stop {
            let mass = self.density(n);
            if mass > best.0 {
                best = (mass, n);
            }
            n += 1.0;
        }
        best.1
    }

    pub fn cdf(&self, value: f64) -> f64 {
        let x = match self.stat_type {
            StatType::DiscreteNumeric => value.floor() + 0.5,
            _ => value,
        };
        self.area_to(x).clamp(0.0, 1.0)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let (xs, ys) = (&self.knots_x, &self.knots_y);
        let u = rng.random::<f64>() * integrate_pwl(xs, ys).unwrap_or(1.0);
        let mut acc = 0.0;
        let mut x = xs[xs.len() - 1];
        for i in 0..xs.len() - 1 {
            let width = xs[i + 1] - xs[i];
            let seg = 0.5 * width * (ys[i] + ys[i + 1]);
            if u < acc + seg || i == xs.len() - 2 {
                // Solve y0 t + slope t^2 / 2 = r for t in [0, width].
                let r = (u - acc).max(0.0);
                let slope = (ys[i + 1] - ys[i]) / width;
                let disc = (ys[i] * ys[i] + 2.0 * slope * r).max(0.0);
                let denom = ys[i] + disc.sqrt();
                let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
                x = xs[i] + t.clamp(0.0, width);
                break;
            }
            acc += seg;
        }
        match self.stat_type {
            StatType::DiscreteNumeric => x.round(),
            _ => x,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots_x[0], self.knots_x[self.knots_x.len() - 1])
    }

    pub fn is_unimodal(&self) -> bool {
        let y = &self.knots_y;
        let k = self.mode_index;
        k < y.len() && y[..=k].windows(2).all(|w| w[0] <= w[1]) && y[k..].windows(2).all(|w| w[0] >= w[1])
    }

    pub fn total_mass(&self) -> f64 {
        integrate_pwl(&self.knots_x, &self.knots_y).unwrap_or(f64::NAN)
    }
}

impl PiecewiseDensity {
    pub fn variable(&self) -> usize {
        match self {
            PiecewiseDensity::Histogram(h) => h.variable,
            PiecewiseDensity::PiecewiseLinear(p) => p.variable,
        }
    }

    pub fn stat_type(&self) -> StatType {
        match self {
            PiecewiseDensity::Histogram(h) => h.stat_type,
            PiecewiseDensity::PiecewiseLinear(p) => p.stat_type,
        }
    }

    /// Density (continuous) or mass (discrete, categorical) at `value`.
    pub fn density(&self, value: f64) -> f64 {
        match self {
            PiecewiseDensity::Histogram(h) => h.density(value),
            PiecewiseDensity::PiecewiseLinear(p) => p.density(value),
        }
    }

    pub fn mode(&self) -> f64 {
        match self {
            PiecewiseDensity::Histogram(h) => h.mode(),
            PiecewiseDensity::PiecewiseLinear(p) => p.mode(),
        }
    }

    pub fn cdf(&self, value: f64) -> f64 {
        match self {
            PiecewiseDensity::Histogram(h) => h.cdf(value),
            PiecewiseDensity::PiecewiseLinear(p) => p.cdf(value),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            PiecewiseDensity::Histogram(h) => h.sample(rng),
            PiecewiseDensity::PiecewiseLinear(p) => p.sample(rng),
        }
    }

    /// Closed interval containing all mass (category indices for
    /// categorical leaves).
    pub fn support(&self) -> (f64, f64) {
        match self {
            PiecewiseDensity::Histogram(h) => match h.stat_type {
                StatType::Categorical { arity } => (0.0, arity as f64 - 1.0),
                _ => (h.bin_edges[0], h.bin_edges[h.bin_edges.len() - 1]),
            },
            PiecewiseDensity::PiecewiseLinear(p) => p.support(),
        }
    }

    /// Integral (or sum) of the leaf over its domain.
    pub fn total_mass(&self) -> f64 {
        match self {
            PiecewiseDensity::Histogram(h) => h.total_mass(),
            PiecewiseDensity::PiecewiseLinear(p) => p.total_mass(),
        }
    }
}
