//! Network representation, the top-down structure learner and structural
//! validation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Schema, StatType};
use crate::error::{MspnError, Result};
use crate::leaves::{fit_histogram, fit_leaf_in, LeafKind, PiecewiseDensity};
use crate::numerics::KMeansSettings;
use crate::rdc::{cluster_local, split_local, LocalColumns, SamplePartition};

/// Hyperparameters of the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Minimum number of rows needed to attempt a split.
    pub eta: usize,
    /// Laplace smoothing added to every histogram bin.
    pub delta: f64,
    /// RDC threshold above which two variables are linked.
    pub alpha: f64,
    pub leaf_kind: LeafKind,
    /// Width of the random sine projection.
    pub k: usize,
    /// Variance of the projection weights.
    pub s: f64,
    pub kmeans: KMeansSettings,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            eta: 200,
            delta: 1.0,
            alpha: 0.3,
            leaf_kind: LeafKind::Isotonic,
            k: 20,
            s: 1.0 / 6.0,
            kmeans: KMeansSettings::default(),
            seed: 7,
        }
    }
}

impl LearnConfig {
    pub fn check(&self) -> Result<()> {
        if self.eta < 2 {
            return Err(MspnError::Config(format!("eta must be >= 2, got {}", self.eta)));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(MspnError::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MspnError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.k == 0 {
            return Err(MspnError::Config("projection width k must be positive".into()));
        }
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(MspnError::Config(format!("projection variance s must be > 0, got {}", self.s)));
        }
        Ok(())
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NodeKind {
    Sum { weights: Vec<f64>, children: Vec<NodeId> },
    Product { children: Vec<NodeId> },
    Leaf { leaf: PiecewiseDensity },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MspnNode {
    /// Sorted variable indices.
    pub scope: Vec<usize>,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl MspnNode {
    pub fn children(&self) -> &[NodeId] {
        match &self.kind {
            NodeKind::Sum { children, .. } | NodeKind::Product { children } => children,
            NodeKind::Leaf { .. } => &[],
        }
    }
}

/// A learned (or hand-built) network stored as a node arena.
#[derive(Debug, Clone, PartialEq)]
pub struct Mspn {
    schema: Schema,
    config: LearnConfig,
    nodes: Vec<MspnNode>,
    root: NodeId,
    /// Children-before-parents order of the nodes reachable from the root,
    /// each visited once.
    post_order: Vec<NodeId>,
}

impl Mspn {
    pub fn from_nodes(schema: Schema, config: LearnConfig, nodes: Vec<MspnNode>, root: NodeId) -> Result<Self> {
        if root >= nodes.len() {
            return Err(MspnError::Format(format!("root {root} out of range ({} nodes)", nodes.len())));
        }
        for (id, node) in nodes.iter().enumerate() {
            if let Some(&bad) = node.children().iter().find(|&&c| c >= nodes.len()) {
                return Err(MspnError::Format(format!("node {id} references missing child {bad}")));
            }
        }
        let post_order = post_order(&nodes, root);
        Ok(Mspn {
            schema,
            config,
            nodes,
            root,
            post_order,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &LearnConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[MspnNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &MspnNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn n_vars(&self) -> usize {
        self.schema.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn post_order(&self) -> &[NodeId] {
        &self.post_order
    }

    pub fn leaves(&self) -> impl Iterator<Item = &PiecewiseDensity> {
        self.nodes.iter().filter_map(|n| match &n.kind {
            NodeKind::Leaf { leaf } => Some(leaf),
            _ => None,
        })
    }

    pub fn stat_type(&self, var: usize) -> StatType {
        self.schema.stat_type(var)
    }

    /// Total probability mass of the network computed bottom-up from the
    /// leaves' own integrals and the mixture weights.
    pub fn total_mass(&self) -> f64 {
        let mut value = vec![0.0; self.nodes.len()];
        for &id in &self.post_order {
            value[id] = match &self.nodes[id].kind {
                NodeKind::Leaf { leaf } => leaf.total_mass(),
                NodeKind::Product { children } => children.iter().map(|&c| value[c]).product(),
                NodeKind::Sum { weights, children } => weights.iter().zip(children).map(|(w, &c)| w * value[c]).sum(),
            };
        }
        value[self.root]
    }

    pub fn count_kinds(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for n in &self.nodes {
            match n.kind {
                NodeKind::Sum { .. } => counts.0 += 1,
                NodeKind::Product { .. } => counts.1 += 1,
                NodeKind::Leaf { .. } => counts.2 += 1,
            }
        }
        counts
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for &id in &self.post_order {
            depth[id] = 1 + self.nodes[id].children().iter().map(|&c| depth[c]).max().unwrap_or(0);
        }
        depth[self.root]
    }
}

fn post_order(nodes: &[MspnNode], root: NodeId) -> Vec<NodeId> {
    let mut seen = vec![false; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![(root, false)];
    while let Some((id, expanded)) = stack.pop() {
        if expanded {
            order.push(id);
            continue;
        }
        if seen[id] {
            continue;
        }
        seen[id] = true;
        stack.push((id, true));
        for &c in nodes[id].children().iter().rev() {
            if !seen[c] {
                stack.push((c, false));
            }
        }
    }
    order
}

struct Task {
    rows: Vec<usize>,
    vars: Vec<usize>,
    path: String,
    parent: Option<(NodeId, usize)>,
}

/// Learns a network top-down: variables split into independent groups
/// become product nodes, row clusters become sum nodes weighted by their
/// sizes, and single variables end in nonparametric leaves.
pub fn learn_mspn(dataset: &Dataset, config: &LearnConfig) -> Result<Mspn> {
    config.check()?;
    let n = dataset.n_vars();
    let types: Vec<StatType> = (0..n).map(|v| dataset.stat_type(v)).collect();
    // Every leaf's smoothing tails extend over the variable's whole-data
    // histogram support, so no in-domain value gets zero density.
    let domains = (0..n)
        .map(|v| {
            if types[v].is_categorical() {
                return Ok(None);
            }
            let h = fit_histogram(v, dataset.column(v), types[v], config.delta)?;
            Ok(Some((h.bin_edges[0], h.bin_edges[h.bin_edges.len() - 1])))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut nodes: Vec<MspnNode> = Vec::new();
    let mut stack = vec![Task {
        rows: (0..dataset.n_rows()).collect(),
        vars: (0..n).collect(),
        path: "r".to_string(),
        parent: None,
    }];

    while let Some(task) = stack.pop() {
        let id = nodes.len();
        if let Some((parent, slot)) = task.parent {
            match &mut nodes[parent].kind {
                NodeKind::Sum { children, .. } | NodeKind::Product { children } => children[slot] = id,
                NodeKind::Leaf { .. } => unreachable!("leaves have no children"),
            }
        }

        let columns: Vec<Vec<f64>> = task
            .vars
            .iter()
            .map(|&v| task.rows.iter().map(|&r| dataset.value(r, v)).collect())
            .collect();
        let local_types: Vec<StatType> = task.vars.iter().map(|&v| types[v]).collect();
        let local = LocalColumns {
            vars: &task.vars,
            columns: &columns,
            types: &local_types,
        };

        let step = if task.vars.len() == 1 {
            univariate_step(&task, &local, config)?
        } else if task.rows.len() < config.eta {
            Step::Factorize
        } else {
            let split = split_local(&local, config, &task.path)?;
            if split.groups.len() > 1 {
                Step::Product(split.groups)
            } else {
                let part = cluster_local(&local, config, &task.path)?;
                if part.clusters.len() > 1 {
                    Step::Sum(part)
                } else {
                    Step::Factorize
                }
            }
        };

        let scope = task.vars.clone();
        let mut children_tasks = Vec::new();
        let kind = match step {
            Step::Leaf => NodeKind::Leaf {
                leaf: fit_leaf_in(
                    task.vars[0],
                    &columns[0],
                    local_types[0],
                    config.delta,
                    config.leaf_kind,
                    domains[task.vars[0]],
                )?,
            },
            Step::Factorize => {
                for &v in &task.vars {
                    children_tasks.push((task.rows.clone(), vec![v]));
                }
                NodeKind::Product {
                    children: vec![0; task.vars.len()],
                }
            }
            Step::Product(groups) => {
                let len = groups.len();
                for g in groups {
                    children_tasks.push((task.rows.clone(), g));
                }
                NodeKind::Product { children: vec![0; len] }
            }
            Step::Sum(part) => {
                let len = part.clusters.len();
                for cluster in part.clusters {
                    let rows = cluster.iter().map(|&local_row| task.rows[local_row]).collect();
                    children_tasks.push((rows, task.vars.clone()));
                }
                NodeKind::Sum {
                    weights: part.proportions,
                    children: vec![0; len],
                }
            }
        };
        nodes.push(MspnNode { scope, kind });

        for (slot, (rows, vars)) in children_tasks.into_iter().enumerate().rev() {
            stack.push(Task {
                rows,
                vars,
                path: format!("{}.{slot}", task.path),
                parent: Some((id, slot)),
            });
        }
    }

    Mspn::from_nodes(dataset.schema().clone(), config.clone(), nodes, 0)
}

enum Step {
    Leaf,
    Factorize,
    Product(Vec<Vec<usize>>),
    Sum(SamplePartition),
}

fn univariate_step(task: &Task, local: &LocalColumns<'_>, config: &LearnConfig) -> Result<Step> {
    if task.rows.len() < config.eta {
        return Ok(Step::Leaf);
    }
    let part = cluster_local(local, config, &task.path)?;
    if part.clusters.len() != 2 {
        return Ok(Step::Leaf);
    }
    let col = &local.columns[0];
    let big_enough = part.clusters.iter().all(|c| c.len() * 4 >= config.eta);
    let means: Vec<f64> = part
        .clusters
        .iter()
        .map(|c| c.iter().map(|&r| col[r]).sum::<f64>() / c.len() as f64)
        .collect();
    if big_enough && (means[0] - means[1]).abs() > 1e-9 {
        Ok(Step::Sum(part))
    } else {
        Ok(Step::Leaf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Completeness,
    Decomposability,
    WeightNormalization,
    LeafNormalization,
    LeafScope,
    Tree,
    RootScope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Child positions from the root, e.g. `r/0/2`.
    pub path: String,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "valid: 0 violations");
        }
        writeln!(f, "invalid: {} violation(s)", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {} [{:?}] {}", v.path, v.kind, v.message)?;
        }
        Ok(())
    }
}

/// Checks completeness, decomposability, weight and leaf normalization and
/// tree shape, reporting every violation.
pub fn validate(mspn: &Mspn) -> ValidityReport {
    let mut report = ValidityReport::default();
    let nodes = &mspn.nodes;
    let mut push = |path: &str, kind: ViolationKind, message: String| {
        report.violations.push(Violation {
            path: path.to_string(),
            kind,
            message,
        })
    };

    let all: Vec<usize> = (0..mspn.n_vars()).collect();
    if sorted_set(&nodes[mspn.root].scope) != all {
        push("r", ViolationKind::RootScope, format!("root scope {:?} is not all variables", nodes[mspn.root].scope));
    }

    let mut parents = vec![0usize; nodes.len()];
    let mut stack = vec![(mspn.root, "r".to_string())];
    let mut visits = 0usize;
    while let Some((id, path)) = stack.pop() {
        visits += 1;
        parents[id] += 1;
        if parents[id] > 1 {
            push(&path, ViolationKind::Tree, format!("node {id} is reached more than once"));
            continue;
        }
        if visits > nodes.len() {
            push(&path, ViolationKind::Tree, "cycle detected".into());
            break;
        }
        let node = &nodes[id];
        let scope = sorted_set(&node.scope);
        match &node.kind {
            NodeKind::Sum { weights, children } => {
                if children.is_empty() {
                    push(&path, ViolationKind::Completeness, "sum node without children".into());
                }
                if weights.len() != children.len() {
                    push(&path, ViolationKind::WeightNormalization, format!("{} weights for {} children", weights.len(), children.len()));
                }
                if weights.iter().any(|&w| !(w > 0.0)) {
                    push(&path, ViolationKind::WeightNormalization, format!("non-positive weight in {weights:?}"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    push(&path, ViolationKind::WeightNormalization, format!("weights sum to {total}"));
                }
                for (i, &c) in children.iter().enumerate() {
                    if sorted_set(&nodes[c].scope) != scope {
                        push(
                            &format!("{path}/{i}"),
                            ViolationKind::Completeness,
                            format!("child scope {:?} differs from sum scope {:?}", nodes[c].scope, node.scope),
                        );
                    }
                }
            }
            NodeKind::Product { children } => {
                let mut union = BTreeSet::new();
                let mut overlap = false;
                for &c in children {
                    for &v in &nodes[c].scope {
                        if !union.insert(v) {
                            overlap = true;
                        }
                    }
                }
                if overlap {
                    push(&path, ViolationKind::Decomposability, "children scopes overlap".into());
                }
                if union.into_iter().collect::<Vec<_>>() != scope {
                    push(&path, ViolationKind::Decomposability, format!("children scopes do not cover {:?}", node.scope));
                }
            }
            NodeKind::Leaf { leaf } => {
                if scope != vec![leaf.variable()] {
                    push(&path, ViolationKind::LeafScope, format!("leaf over variable {} has scope {:?}", leaf.variable(), node.scope));
                }
                if leaf.variable() < mspn.n_vars() && leaf.stat_type() != mspn.stat_type(leaf.variable()) {
                    push(&path, ViolationKind::LeafScope, format!("leaf type {:?} does not match schema", leaf.stat_type()));
                }
                let mass = leaf.total_mass();
                if !((mass - 1.0).abs() <= 1e-9) {
                    push(&path, ViolationKind::LeafNormalization, format!("leaf integrates to {mass}"));
                }
            }
        }
        for (i, &c) in node.children().iter().enumerate().rev() {
            stack.push((c, format!("{path}/{i}")));
        }
    }

    for (id, &count) in parents.iter().enumerate() {
        if count == 0 {
            push(&format!("#{id}"), ViolationKind::Tree, format!("node {id} is unreachable from the root"));
        }
    }
    report
}

fn sorted_set(scope: &[usize]) -> Vec<usize> {
    let mut s = scope.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}
