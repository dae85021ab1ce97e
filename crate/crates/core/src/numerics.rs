//! Numerical kernels shared by the learner: random sine features, canonical
//! correlation, k-means, pool-adjacent-violators and piecewise-linear
//! integration.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MspnError, Result};

/// Ridge added to the standardized covariance blocks before inversion.
pub const CCA_RIDGE: f64 = 1e-6;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a global seed with a textual node path and an integer tag into a
/// new seed. Stable across platforms and toolchains.
pub fn derive_seed(seed: u64, path: &str, tag: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for byte in seed
        .to_le_bytes()
        .iter()
        .chain(path.as_bytes())
        .chain(&[0xff])
        .chain(tag.to_le_bytes().iter())
    {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random linear map followed by a sine: `sin(w x + b)` with `w` (k x d) and
/// `b` (k) drawn i.i.d. from a zero-mean Gaussian of variance `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection {
    pub w: DMatrix<f64>,
    pub b: Vec<f64>,
    pub s: f64,
}

impl RandomProjection {
    pub fn sample(input_dim: usize, k: usize, s: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, s.sqrt()).expect("projection variance must be finite and >= 0");
        // Row-major draw order so the same seed yields the same map
        // regardless of matrix storage.
        let mut w = DMatrix::zeros(k, input_dim);
        for r in 0..k {
            for c in 0..input_dim {
                w[(r, c)] = normal.sample(rng);
            }
        }
        let b = (0..k).map(|_| normal.sample(rng)).collect();
        RandomProjection { w, b, s }
    }

    pub fn from_seed(input_dim: usize, k: usize, s: f64, seed: u64) -> Self {
        Self::sample(input_dim, k, s, &mut rng_from_seed(seed))
    }

    pub fn k(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }
}

/// Applies a random sine projection to every row of `data` (M x d).
pub fn project(data: &DMatrix<f64>, proj: &RandomProjection) -> Result<DMatrix<f64>> {
    if data.ncols() != proj.input_dim() {
        return Err(MspnError::Dim {
            expected: proj.input_dim(),
            found: data.ncols(),
        });
    }
    let mut out = data * proj.w.transpose();
    for (c, mut col) in out.column_iter_mut().enumerate() {
        let b = proj.b[c];
        col.apply(|v| *v = (*v + b).sin());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcaResult {
    /// Largest canonical correlation, clamped to [0, 1].
    pub rho: f64,
}

/// Largest canonical correlation between the column spaces of `a` and `b`.
///
/// Columns are centered and scaled to unit variance (constant columns are
/// zeroed), a ridge of [`CCA_RIDGE`] is added to both auto-covariance
/// blocks, and the two-block eigenproblem is reduced to the symmetric
/// problem on `Saa^-1/2 Sab Sbb^-1 Sba Saa^-1/2`.
pub fn cca_max_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CcaResult> {
    let m = a.nrows();
    if b.nrows() != m {
        return Err(MspnError::Dim {
            expected: m,
            found: b.nrows(),
        });
    }
    if m < 2 {
        return Err(MspnError::InsufficientData { needed: 2, found: m });
    }
    let a = standardize(a);
    let b = standardize(b);
    let denom = (m - 1) as f64;

    let mut saa = a.tr_mul(&a) / denom;
    let mut sbb = b.tr_mul(&b) / denom;
    let sab = a.tr_mul(&b) / denom;
    for i in 0..saa.nrows() {
        saa[(i, i)] += CCA_RIDGE;
    }
    for i in 0..sbb.nrows() {
        sbb[(i, i)] += CCA_RIDGE;
    }

    let saa_inv_sqrt = sym_inverse_power(saa, -0.5);
    let sbb_inv = sym_inverse_power(sbb, -1.0);

    let left = &saa_inv_sqrt * &sab;
    let mut c = &left * sbb_inv * left.transpose();
    let ct = c.transpose();
    c = (c + ct) * 0.5;

    let eig = SymmetricEigen::new(c);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    Ok(CcaResult {
        rho: top.clamp(0.0, 1.0).sqrt(),
    })
}

fn standardize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / m;
        col.apply(|v| *v -= mean);
        let ss = col.iter().map(|v| v * v).sum::<f64>();
        let sd = (ss / (m - 1.0)).sqrt();
        // Relative cutoff: rounding noise left over from centering a
        // constant column must not be blown up to unit variance.
        if sd > 1e-12 * mean.abs().max(1.0) {
            col.apply(|v| *v /= sd);
        } else {
            col.fill(0.0);
        }
    }
    out
}

fn sym_inverse_power(mat: DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(mat);
    let vals = eig.eigenvalues.map(|e| e.max(CCA_RIDGE).powf(power));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansSettings {
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid displacement.
    pub tol: f64,
}

impl Default for KMeansSettings {
    fn default() -> Self {
        KMeansSettings {
            max_iter: 100,
            tol: 1e-4,
        }
    }
}

/// Lloyd's algorithm with k-means++ seeding. Points are rows of equal
/// length; returned labels lie in `0..k` but some clusters may be empty.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, settings: &KMeansSettings) -> Vec<usize> {
    let m = points.len();
    if m == 0 || k == 0 {
        return vec![0; m];
    }
    let mut rng = rng_from_seed(seed);
    let mut centroids = kmeans_pp_init(points, k, &mut rng);
    let mut labels = vec![0usize; m];

    for _ in 0..settings.max_iter.max(1) {
        for (label, p) in labels.iter_mut().zip(points) {
            *label = nearest(p, &centroids).0;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&label, p) in labels.iter().zip(points) {
            counts[label] += 1;
            for (s, v) in sums[label].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for (c, (sum, &count)) in sums.into_iter().zip(&counts).enumerate() {
            if count == 0 {
                continue;
            }
            let next: Vec<f64> = sum.into_iter().map(|s| s / count as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < settings.tol {
            break;
        }
    }
    for (label, p) in labels.iter_mut().zip(points) {
        *label = nearest(p, &centroids).0;
    }
    labels
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let m = points.len();
    let mut centroids = vec![points[rng.random_range(0..m)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // Every point coincides with a centroid: further centers would
            // be duplicates.
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = m - 1;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if acc > target && d > 0.0 {
                chosen = i;
                break;
            }
        }
        if d2[chosen] <= 0.0 {
            chosen = d2.iter().rposition(|&d| d > 0.0).expect("positive total");
        }
        let c = points[chosen].clone();
        for (dist, p) in d2.iter_mut().zip(points) {
            *dist = dist.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotone {
    Increasing,
    Decreasing,
}

/// Weighted least-squares monotone fit by pool-adjacent-violators.
pub fn pava_monotone(ys: &[f64], weights: &[f64], direction: Monotone) -> Result<Vec<f64>> {
    if ys.is_empty() {
        return Err(MspnError::EmptyInput("isotonic fit of an empty sequence"));
    }
    if ys.len() != weights.len() {
        return Err(MspnError::Dim {
            expected: ys.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(MspnError::Domain("isotonic weights must be positive".into()));
    }
    let sign = match direction {
        Monotone::Increasing => 1.0,
        Monotone::Decreasing => -1.0,
    };

    // Blocks of pooled values: (mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(weights) {
        blocks.push((sign * y, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let wt = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / wt, wt, n1 + n2));
        }
    }
    Ok(blocks
        .into_iter()
        .flat_map(|(mean, _, n)| std::iter::repeat_n(sign * mean, n))
        .collect())
}

/// Exact integral of the piecewise-linear interpolant through the knots.
pub fn integrate_pwl(knots_x: &[f64], knots_y: &[f64]) -> Result<f64> {
    if knots_x.len() != knots_y.len() {
        return Err(MspnError::Dim {
            expected: knots_x.len(),
            found: knots_y.len(),
        });
    }
    if knots_x.len() < 2 {
        return Err(MspnError::Domain("need at least two knots".into()));
    }
    if knots_x.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MspnError::Domain("knots must be strictly increasing".into()));
    }
    if knots_y.iter().any(|&y| !(y >= 0.0)) {
        return Err(MspnError::Domain("knot values must be nonnegative".into()));
    }
    Ok(knots_x
        .windows(2)
        .zip(knots_y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum())
}
