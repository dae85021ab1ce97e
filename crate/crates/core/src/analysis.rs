//! Pairwise mutual information computed from the network's own pairwise
//! marginals, and a normalized-MI dependency graph for export.

use std::fmt::Write as _;

use serde::Serialize;

use crate::data::StatType;
use crate::error::{MspnError, Result};
use crate::structure::{Mspn, NodeKind};

pub const DEFAULT_GRID: usize = 256;

/// Quadrature points and cell measures for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VarGrid {
    pub points: Vec<f64>,
    pub measure: f64,
}

/// Midpoint grid over the union of the variable's leaf supports for
/// continuous variables; exact enumeration otherwise.
pub fn variable_grid(mspn: &Mspn, var: usize, grid_size: usize) -> Result<VarGrid> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for leaf in mspn.leaves().filter(|l| l.variable() == var) {
        let (a, b) = leaf.support();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(MspnError::Query(format!("variable {var} has no leaves")));
    }
    Ok(match mspn.stat_type(var) {
        StatType::Continuous => {
            let g = grid_size.max(1);
            let h = (hi - lo) / g as f64;
            VarGrid {
                points: (0..g).map(|i| lo + (i as f64 + 0.5) * h).collect(),
                measure: h,
            }
        }
        StatType::DiscreteNumeric => {
            let (first, last) = (lo.ceil() as i64, hi.floor() as i64);
            VarGrid {
                points: (first..=last).map(|n| n as f64).collect(),
                measure: 1.0,
            }
        }
        StatType::Categorical { arity } => VarGrid {
            points: (0..arity).map(|c| c as f64).collect(),
            measure: 1.0,
        },
    })
}

#[derive(Debug, Clone)]
enum Table {
    One,
    Row(Vec<f64>),
    Col(Vec<f64>),
    /// Row-major `rows x cols`.
    Full(Vec<f64>),
}

impl Table {
    fn to_full(&self, rows: usize, cols: usize) -> Vec<f64> {
        match self {
            Table::One => vec![1.0; rows * cols],
            Table::Row(r) => (0..rows * cols).map(|k| r[k / cols]).collect(),
            Table::Col(c) => (0..rows * cols).map(|k| c[k % cols]).collect(),
            Table::Full(f) => f.clone(),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Table::One => 0,
            Table::Row(_) => 1,
            Table::Col(_) => 2,
            Table::Full(_) => 3,
        }
    }
}

/// Joint density (or mass) of variables `i` and `j` on the product of their
/// grids with every other variable marginalized, returned row-major with
/// `i` indexing rows.
pub fn pairwise_table(mspn: &Mspn, i: usize, j: usize, gi: &VarGrid, gj: &VarGrid) -> Vec<f64> {
    let (rows, cols) = (gi.points.len(), gj.points.len());
    let nodes = mspn.nodes();
    let mut tables: Vec<Option<Table>> = vec![None; nodes.len()];
    for &id in mspn.post_order() {
        let t = match &nodes[id].kind {
            NodeKind::Leaf { leaf } => {
                let v = leaf.variable();
                if v == i {
                    Table::Row(gi.points.iter().map(|&x| leaf.density(x)).collect())
                } else if v == j {
                    Table::Col(gj.points.iter().map(|&y| leaf.density(y)).collect())
                } else {
                    Table::One
                }
            }
            NodeKind::Product { children } => {
                let mut acc = Table::One;
                for &c in children {
                    acc = multiply(acc, tables[c].take().expect("child evaluated"), rows, cols);
                }
                acc
            }
            NodeKind::Sum { weights, children } => {
                let kids: Vec<Table> = children.iter().map(|&c| tables[c].take().expect("child evaluated")).collect();
                weighted_sum(weights, &kids, rows, cols)
            }
        };
        tables[id] = Some(t);
    }
    tables[mspn.root()].take().expect("root evaluated").to_full(rows, cols)
}

fn multiply(a: Table, b: Table, rows: usize, cols: usize) -> Table {
    match (a, b) {
        (Table::One, t) | (t, Table::One) => t,
        (Table::Row(r), Table::Col(c)) | (Table::Col(c), Table::Row(r)) => {
            Table::Full((0..rows * cols).map(|k| r[k / cols] * c[k % cols]).collect())
        }
        (Table::Row(a), Table::Row(b)) => Table::Row(a.iter().zip(&b).map(|(x, y)| x * y).collect()),
        (Table::Col(a), Table::Col(b)) => Table::Col(a.iter().zip(&b).map(|(x, y)| x * y).collect()),
        (a, b) => {
            let (fa, fb) = (a.to_full(rows, cols), b.to_full(rows, cols));
            Table::Full(fa.iter().zip(&fb).map(|(x, y)| x * y).collect())
        }
    }
}

fn weighted_sum(weights: &[f64], kids: &[Table], rows: usize, cols: usize) -> Table {
    let ranks: Vec<u8> = kids.iter().map(Table::rank).collect();
    let has = |r: u8| ranks.contains(&r);
    let shape = if has(3) || (has(1) && has(2)) {
        3
    } else if has(1) {
        1
    } else if has(2) {
        2
    } else {
        0
    };
    let len = match shape {
        0 => return Table::One,
        1 => rows,
        2 => cols,
        _ => rows * cols,
    };
    let mut out = vec![0.0; len];
    for (w, kid) in weights.iter().zip(kids) {
        match (shape, kid) {
            (_, Table::One) => out.iter_mut().for_each(|o| *o += w),
            (1, Table::Row(r)) | (2, Table::Col(r)) => out.iter_mut().zip(r).for_each(|(o, v)| *o += w * v),
            (_, t) => out.iter_mut().zip(t.to_full(rows, cols)).for_each(|(o, v)| *o += w * v),
        }
    }
    match shape {
        1 => Table::Row(out),
        2 => Table::Col(out),
        _ => Table::Full(out),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiResult {
    /// Mutual information in nats.
    pub mi: f64,
    /// MI over the geometric mean of the two marginal entropies, in [0, 1].
    pub nmi: f64,
    pub entropy_i: f64,
    pub entropy_j: f64,
}

/// Mutual information between two variables of the network by quadrature
/// on their pairwise marginal.
pub fn mutual_information(mspn: &Mspn, i: usize, j: usize, grid_size: usize) -> Result<MiResult> {
    if i == j {
        return Err(MspnError::Query("mutual information needs two distinct variables".into()));
    }
    let n = mspn.n_vars();
    if i >= n || j >= n {
        return Err(MspnError::Query(format!("variable index out of range ({n} variables)")));
    }
    // Fixed argument order makes the result symmetric bit for bit.
    let (a, b) = (i.min(j), i.max(j));
    let ga = variable_grid(mspn, a, grid_size)?;
    let gb = variable_grid(mspn, b, grid_size)?;
    let mut joint = pairwise_table(mspn, a, b, &ga, &gb);
    let (rows, cols) = (ga.points.len(), gb.points.len());
    // The quadrature rule is treated as a discrete distribution of its own,
    // so a factorized joint gives exactly factorized marginals.
    let total: f64 = joint.iter().sum::<f64>() * ga.measure * gb.measure;
    if !(total > 0.0) {
        return Err(MspnError::Query("pairwise marginal vanishes on the grid".into()));
    }
    joint.iter_mut().for_each(|p| *p /= total);

    let mut pa = vec![0.0; rows];
    let mut pb = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let p = joint[r * cols + c];
            pa[r] += p * gb.measure;
            pb[c] += p * ga.measure;
        }
    }
    let mut mi = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = joint[r * cols + c];
            if p > 0.0 && pa[r] > 0.0 && pb[c] > 0.0 {
                mi += p * (p / (pa[r] * pb[c])).ln() * ga.measure * gb.measure;
            }
        }
    }
    let ha = entropy(&pa, ga.measure);
    let hb = entropy(&pb, gb.measure);
    let (entropy_i, entropy_j) = if i < j { (ha, hb) } else { (hb, ha) };
    Ok(MiResult {
        mi,
        nmi: normalize(mi, ha, hb),
        entropy_i,
        entropy_j,
    })
}

fn entropy(p: &[f64], measure: f64) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln() * measure).sum::<f64>()
}

/// Differential entropies may be negative; the magnitude of their product
/// is used so the ratio stays defined.
fn normalize(mi: f64, ha: f64, hb: f64) -> f64 {
    let denom = (ha * hb).abs().sqrt();
    if denom > 0.0 {
        (mi / denom).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Entropy of one variable's marginal on its grid.
pub fn marginal_entropy(mspn: &Mspn, var: usize, grid_size: usize) -> Result<f64> {
    let g = variable_grid(mspn, var, grid_size)?;
    let dummy = VarGrid {
        points: vec![0.0],
        measure: 1.0,
    };
    // Pairing with a variable index that matches no leaf leaves a column
    // of ones, i.e. the univariate marginal.
    let mut p = pairwise_table(mspn, var, usize::MAX, &g, &dummy);
    let total: f64 = p.iter().sum::<f64>() * g.measure;
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
    Ok(entropy(&p, g.measure))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEdge {
    pub i: usize,
    pub j: usize,
    pub mi: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiGraph {
    pub nodes: Vec<String>,
    pub entropies: Vec<f64>,
    /// Symmetric matrices with zero diagonals.
    pub mi: Vec<Vec<f64>>,
    pub nmi: Vec<Vec<f64>>,
    /// Every pair, `i < j`.
    pub pairs: Vec<MiEdge>,
    pub grid_size: usize,
    pub edge_threshold: f64,
}

impl MiGraph {
    /// Pairs whose normalized MI reaches the threshold.
    pub fn edges(&self) -> impl Iterator<Item = &MiEdge> {
        self.pairs.iter().filter(move |e| e.nmi >= self.edge_threshold)
    }

    /// Undirected DOT graph; pen width is proportional to normalized MI.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph mi {\n  node [shape=ellipse];\n");
        for name in &self.nodes {
            let _ = writeln!(out, "  \"{}\";", escape(name));
        }
        for e in self.edges() {
            let _ = writeln!(
                out,
                "  \"{}\" -- \"{}\" [penwidth={:.4}, label=\"{:.3}\"];",
                escape(&self.nodes[e.i]),
                escape(&self.nodes[e.j]),
                10.0 * e.nmi,
                e.nmi
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Mutual information for all variable pairs.
pub fn mi_graph(mspn: &Mspn, grid_size: usize, edge_threshold: f64) -> Result<MiGraph> {
    let n = mspn.n_vars();
    if n < 2 {
        return Err(MspnError::Query("an MI graph needs at least two variables".into()));
    }
    let entropies = (0..n).map(|v| marginal_entropy(mspn, v, grid_size)).collect::<Result<Vec<_>>>()?;
    let mut mi = vec![vec![0.0; n]; n];
    let mut nmi = vec![vec![0.0; n]; n];
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = mutual_information(mspn, i, j, grid_size)?;
            mi[i][j] = r.mi;
            mi[j][i] = r.mi;
            nmi[i][j] = r.nmi;
            nmi[j][i] = r.nmi;
            pairs.push(MiEdge { i, j, mi: r.mi, nmi: r.nmi });
        }
    }
    Ok(MiGraph {
        nodes: mspn.schema().columns.iter().map(|c| c.name.clone()).collect(),
        entropies,
        mi,
        nmi,
        pairs,
        grid_size,
        edge_threshold,
    })
}
