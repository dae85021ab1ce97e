//! Randomized dependence coefficient and the two learner steps built on it:
//! splitting variables into independent groups and splitting rows into
//! clusters.

use nalgebra::DMatrix;

use crate::data::{copula_transform, one_hot, Dataset, StatType};
use crate::error::Result;
use crate::numerics::{cca_max_correlation, derive_seed, kmeans, project, RandomProjection};
use crate::structure::LearnConfig;

/// Thresholded dependence graph over variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph {
    pub nodes: Vec<usize>,
    /// `(i, j, rdc)` with `i < j` and `rdc > alpha`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl DependencyGraph {
    /// Connected components, each sorted, ordered by their smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let pos = |v: usize| self.nodes.iter().position(|&n| n == v).expect("edge endpoint not a node");
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, j, _) in &self.edges {
            let (a, b) = (find(&mut parent, pos(i)), find(&mut parent, pos(j)));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for idx in 0..self.nodes.len() {
            let root = find(&mut parent, idx);
            match groups.iter_mut().find(|(r, _)| *r == root) {
                Some((_, g)) => g.push(self.nodes[idx]),
                None => groups.push((root, vec![self.nodes[idx]])),
            }
        }
        let mut out: Vec<Vec<usize>> = groups
            .into_iter()
            .map(|(_, mut g)| {
                g.sort_unstable();
                g
            })
            .collect();
        out.sort_by_key(|g| g[0]);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePartition {
    pub groups: Vec<Vec<usize>>,
    pub graph: DependencyGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePartition {
    /// Row indices per non-empty cluster, each in increasing order.
    pub clusters: Vec<Vec<usize>>,
    pub proportions: Vec<f64>,
}

impl SamplePartition {
    fn from_labels(labels: &[usize]) -> Self {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut clusters = vec![Vec::new(); k];
        for (row, &l) in labels.iter().enumerate() {
            clusters[l].push(row);
        }
        clusters.retain(|c| !c.is_empty());
        let total = labels.len() as f64;
        let proportions = clusters.iter().map(|c| c.len() as f64 / total).collect();
        SamplePartition { clusters, proportions }
    }
}

/// Copula features of one variable: a single rank column for ordered types,
/// and per-column ranks of the one-hot matrix for categorical ones.
pub fn copula_features(column: &[f64], stat_type: StatType) -> Result<DMatrix<f64>> {
    match stat_type {
        StatType::Categorical { arity } => {
            let rows = one_hot(column, arity)?;
            let m = rows.len();
            let mut out = DMatrix::zeros(m, arity);
            for c in 0..arity {
                let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                let cop = copula_transform(&col)?;
                out.set_column(c, &nalgebra::DVector::from_vec(cop));
            }
            Ok(out)
        }
        _ => {
            let cop = copula_transform(column)?;
            Ok(DMatrix::from_vec(cop.len(), 1, cop))
        }
    }
}

/// Copula features of a variable passed through its own random sine
/// projection, drawn from `seed`.
pub fn projected_features(
    column: &[f64],
    stat_type: StatType,
    config: &LearnConfig,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let copula = copula_features(column, stat_type)?;
    let proj = RandomProjection::from_seed(copula.ncols(), config.k, config.s, seed);
    project(&copula, &proj)
}

/// Seed for the projection of variable `var` at the recursion node `path`.
pub fn projection_seed(seed: u64, path: &str, var: usize) -> u64 {
    derive_seed(seed, path, var as u64)
}

/// RDC between variables `i` and `j` of the dataset.
pub fn rdc(dataset: &Dataset, i: usize, j: usize, config: &LearnConfig, seed: u64) -> Result<f64> {
    assert_ne!(i, j, "rdc needs two distinct variables");
    let (lo, hi) = (i.min(j), i.max(j));
    let a = projected_features(dataset.column(lo), dataset.stat_type(lo), config, projection_seed(seed, "", lo))?;
    let b = projected_features(dataset.column(hi), dataset.stat_type(hi), config, projection_seed(seed, "", hi))?;
    Ok(cca_max_correlation(&a, &b)?.rho)
}

/// Columns of a recursion subproblem, tagged with their global variable ids.
pub struct LocalColumns<'a> {
    pub vars: &'a [usize],
    pub columns: &'a [Vec<f64>],
    pub types: &'a [StatType],
}

pub(crate) fn local_features(local: &LocalColumns<'_>, config: &LearnConfig, path: &str) -> Result<Vec<DMatrix<f64>>> {
    local
        .vars
        .iter()
        .zip(local.columns)
        .zip(local.types)
        .map(|((&var, col), &ty)| projected_features(col, ty, config, projection_seed(config.seed, path, var)))
        .collect()
}

pub(crate) fn split_local(local: &LocalColumns<'_>, config: &LearnConfig, path: &str) -> Result<FeaturePartition> {
    let features = local_features(local, config, path)?;
    let n = local.vars.len();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            // Canonical argument order keeps the coefficient symmetric.
            let (x, y) = if local.vars[a] < local.vars[b] { (a, b) } else { (b, a) };
            let rho = cca_max_correlation(&features[x], &features[y])?.rho;
            if rho > config.alpha {
                let (i, j) = (local.vars[x], local.vars[y]);
                edges.push((i, j, rho));
            }
        }
    }
    let graph = DependencyGraph {
        nodes: local.vars.to_vec(),
        edges,
    };
    Ok(FeaturePartition {
        groups: graph.connected_components(),
        graph,
    })
}

pub(crate) fn cluster_local(local: &LocalColumns<'_>, config: &LearnConfig, path: &str) -> Result<SamplePartition> {
    let features = local_features(local, config, path)?;
    let m = local.columns[0].len();
    let width: usize = features.iter().map(|f| f.ncols()).sum();
    let mut points = vec![Vec::with_capacity(width); m];
    for f in &features {
        for (row, p) in points.iter_mut().enumerate() {
            p.extend(f.row(row).iter());
        }
    }
    let labels = kmeans(&points, 2, derive_seed(config.seed, path, u64::MAX), &config.kmeans);
    Ok(SamplePartition::from_labels(&labels))
}

/// Partitions all variables of the dataset into groups that are connected
/// through pairwise RDC values above `alpha`.
pub fn split_features(dataset: &Dataset, alpha: f64, config: &LearnConfig) -> Result<FeaturePartition> {
    let cfg = LearnConfig { alpha, ..config.clone() };
    let (vars, columns, types) = whole(dataset);
    split_local(&LocalColumns { vars: &vars, columns: &columns, types: &types }, &cfg, "")
}

/// Splits the rows of the dataset into at most two clusters with k-means on
/// the concatenated per-variable sine features.
pub fn cluster_samples(dataset: &Dataset, config: &LearnConfig) -> Result<SamplePartition> {
    let (vars, columns, types) = whole(dataset);
    cluster_local(&LocalColumns { vars: &vars, columns: &columns, types: &types }, config, "")
}

fn whole(dataset: &Dataset) -> (Vec<usize>, Vec<Vec<f64>>, Vec<StatType>) {
    let n = dataset.n_vars();
    (
        (0..n).collect(),
        (0..n).map(|v| dataset.column(v).to_vec()).collect(),
        (0..n).map(|v| dataset.stat_type(v)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, ColumnType, Schema};
    use crate::numerics::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn continuous_schema(n: usize) -> Schema {
        Schema::new(
            (0..n)
                .map(|i| ColumnSpec {
                    name: format!("x{i}"),
                    column_type: ColumnType::Continuous,
                    categories: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn uniforms(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..m).map(|_| rng.random::<f64>()).collect()
    }

    fn config(seed: u64) -> LearnConfig {
        LearnConfig { seed, ..LearnConfig::default() }
    }

    #[test]
    fn identical_variables_have_high_rdc() {
        let x = uniforms(1000, 1);
        let ds = Dataset::from_columns(continuous_schema(2), vec![x.clone(), x]).unwrap();
        assert!(rdc(&ds, 0, 1, &config(0), 3).unwrap() > 0.95);
    }

    #[test]
    fn constant_column_gives_zero() {
        let ds = Dataset::from_columns(continuous_schema(2), vec![vec![2.0; 100], uniforms(100, 2)]).unwrap();
        assert!(rdc(&ds, 0, 1, &config(0), 1).unwrap() < 1e-6);
    }

    #[test]
    fn rdc_is_symmetric_and_rank_invariant() {
        let x = uniforms(500, 4);
        let y: Vec<f64> = x.iter().zip(uniforms(500, 5)).map(|(a, n)| a * a + 0.3 * n).collect();
        let ds = Dataset::from_columns(continuous_schema(2), vec![x.clone(), y.clone()]).unwrap();
        let r = rdc(&ds, 0, 1, &config(0), 11).unwrap();
        assert_eq!(r.to_bits(), rdc(&ds, 1, 0, &config(0), 11).unwrap().to_bits());

        let tx: Vec<f64> = x.iter().map(|v| (3.0 * v).exp()).collect();
        let ty: Vec<f64> = y.iter().map(|v| v.powi(3) - 4.0).collect();
        let ds2 = Dataset::from_columns(continuous_schema(2), vec![tx, ty]).unwrap();
        assert_eq!(r.to_bits(), rdc(&ds2, 0, 1, &config(0), 11).unwrap().to_bits());
    }

    #[test]
    fn categorical_dependence_detected() {
        let mut rng = rng_from_seed(8);
        let cat: Vec<f64> = (0..600).map(|_| rng.random_range(0..3) as f64).collect();
        let y: Vec<f64> = cat.iter().map(|c| c * 2.0 + rng.sample::<f64, _>(StandardNormal) * 0.3).collect();
        let schema = Schema::new(vec![
            ColumnSpec { name: "c".into(), column_type: ColumnType::Categorical, categories: Some(vec!["a".into(), "b".into(), "c".into()]) },
            ColumnSpec { name: "y".into(), column_type: ColumnType::Continuous, categories: None },
        ])
        .unwrap();
        let ds = Dataset::from_columns(schema, vec![cat, y]).unwrap();
        assert!(rdc(&ds, 0, 1, &config(0), 2).unwrap() > 0.8);
    }

    #[test]
    fn split_examples() {
        let x = uniforms(1000, 21);
        let y = uniforms(1000, 22);
        let ds = Dataset::from_columns(continuous_schema(2), vec![x.clone(), y.clone()]).unwrap();
        let p = split_features(&ds, 0.3, &config(1)).unwrap();
        assert_eq!(p.groups, vec![vec![0], vec![1]]);

        let ds = Dataset::from_columns(continuous_schema(3), vec![x.clone(), x.clone(), y]).unwrap();
        let p = split_features(&ds, 0.3, &config(1)).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1], vec![2]]);

        let ds = Dataset::from_columns(continuous_schema(2), vec![x.clone(), x.iter().map(|v| 2.0 * v).collect()]).unwrap();
        let p = split_features(&ds, 0.3, &config(1)).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1]]);
    }

    /// Union-find over a brute-force edge list.
    fn brute_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for &(a, b) in edges {
                let m = label[a].min(label[b]);
                if label[a] != m || label[b] != m {
                    label[a] = m;
                    label[b] = m;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for l in 0..n {
            let g: Vec<usize> = (0..n).filter(|&v| label[v] == l).collect();
            if !g.is_empty() {
                groups.push(g);
            }
        }
        groups
    }

    #[test]
    fn components_match_brute_force() {
        let mut rng = rng_from_seed(30);
        for _ in 0..200 {
            let n = rng.random_range(1..9);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.2 {
                        edges.push((i, j));
                    }
                }
            }
            let graph = DependencyGraph {
                nodes: (0..n).collect(),
                edges: edges.iter().map(|&(i, j)| (i, j, 0.5)).collect(),
            };
            assert_eq!(graph.connected_components(), brute_components(n, &edges));
        }
    }

    #[test]
    fn clusters_recover_gaussian_blobs() {
        let mut rng = rng_from_seed(40);
        let mut cols = vec![Vec::new(), Vec::new()];
        let mut truth = Vec::new();
        for _ in 0..500 {
            let blob = rng.random_bool(0.5);
            let center = if blob { 5.0 } else { -5.0 };
            for c in cols.iter_mut() {
                c.push(center + rng.sample::<f64, _>(StandardNormal));
            }
            truth.push(blob);
        }
        let ds = Dataset::from_columns(continuous_schema(2), cols).unwrap();
        let part = cluster_samples(&ds, &config(3)).unwrap();
        assert_eq!(part.clusters.len(), 2);
        let in_first: Vec<bool> = {
            let mut v = vec![false; 500];
            for &r in &part.clusters[0] {
                v[r] = true;
            }
            v
        };
        let agree = in_first.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let agree = agree.max(500 - agree);
        assert!(agree as f64 >= 0.95 * 500.0, "{agree}");
    }

    #[test]
    fn cluster_degenerate_cases() {
        let ds = Dataset::from_columns(continuous_schema(2), vec![vec![0.0, 1.0], vec![3.0, -1.0]]).unwrap();
        let part = cluster_samples(&ds, &config(0)).unwrap();
        assert_eq!(part.clusters.len(), 2);
        assert_eq!(part.proportions, vec![0.5, 0.5]);

        let ds = Dataset::from_columns(continuous_schema(2), vec![vec![1.0; 20], vec![2.0; 20]]).unwrap();
        let part = cluster_samples(&ds, &config(0)).unwrap();
        assert_eq!(part.clusters.len(), 1);
        assert_eq!(part.proportions, vec![1.0]);
    }

    #[test]
    fn partition_covers_every_row_once() {
        let ds = Dataset::from_columns(continuous_schema(3), vec![uniforms(300, 1), uniforms(300, 2), uniforms(300, 3)]).unwrap();
        let part = cluster_samples(&ds, &config(5)).unwrap();
        let mut rows: Vec<usize> = part.clusters.concat();
        rows.sort_unstable();
        assert_eq!(rows, (0..300).collect::<Vec<_>>());
        assert!((part.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
