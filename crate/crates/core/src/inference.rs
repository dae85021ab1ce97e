//! Query answering over a network: joint and marginal evaluation,
//! conditionals, approximate MPE and conditional sampling. Every query is
//! one bottom-up pass, optionally followed by one top-down pass.
//!
//! Values are mixed-measure: observed continuous variables contribute
//! densities, observed discrete and categorical ones contribute masses.

use rand::Rng;

use crate::data::StatType;
use crate::error::{MspnError, Result};
use crate::structure::{Mspn, NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarState {
    Observed(f64),
    Marginalized,
}

/// Per-variable evidence over the whole network scope.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    states: Vec<VarState>,
}

impl Evidence {
    /// Evidence with every variable marginalized.
    pub fn marginal(n_vars: usize) -> Self {
        Evidence {
            states: vec![VarState::Marginalized; n_vars],
        }
    }

    pub fn from_states(states: Vec<VarState>) -> Self {
        Evidence { states }
    }

    /// Fully observed evidence.
    pub fn complete(values: &[f64]) -> Self {
        Evidence {
            states: values.iter().map(|&v| VarState::Observed(v)).collect(),
        }
    }

    pub fn with(mut self, var: usize, value: f64) -> Self {
        self.states[var] = VarState::Observed(value);
        self
    }

    pub fn set(&mut self, var: usize, state: VarState) {
        self.states[var] = state;
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, var: usize) -> VarState {
        self.states[var]
    }

    pub fn observed(&self, var: usize) -> Option<f64> {
        match self.states[var] {
            VarState::Observed(v) => Some(v),
            VarState::Marginalized => None,
        }
    }

    pub fn observed_vars(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.observed(v).is_some()).collect()
    }

    /// Union of two evidences over disjoint observed sets.
    pub fn merge(&self, other: &Evidence) -> Result<Evidence> {
        if self.len() != other.len() {
            return Err(MspnError::Query(format!(
                "evidence lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        let mut states = self.states.clone();
        for (var, (s, o)) in states.iter_mut().zip(&other.states).enumerate() {
            match (*s, *o) {
                (VarState::Observed(_), VarState::Observed(_)) => {
                    return Err(MspnError::Query(format!("variable {var} observed in both evidences")))
                }
                (VarState::Marginalized, o) => *s = o,
                _ => {}
            }
        }
        Ok(Evidence { states })
    }
}

/// A value for every variable of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment(pub Vec<f64>);

impl Assignment {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn to_evidence(&self) -> Evidence {
        Evidence::complete(&self.0)
    }
}

/// Number of node visits performed while answering one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub visits: usize,
}

pub fn check_evidence(mspn: &Mspn, evidence: &Evidence) -> Result<()> {
    if evidence.len() != mspn.n_vars() {
        return Err(MspnError::Query(format!(
            "evidence covers {} variables, network has {}",
            evidence.len(),
            mspn.n_vars()
        )));
    }
    for var in 0..evidence.len() {
        let Some(v) = evidence.observed(var) else { continue };
        let ok = match mspn.stat_type(var) {
            StatType::Continuous => v.is_finite(),
            StatType::DiscreteNumeric => v.is_finite() && v.fract() == 0.0,
            // Indices at or past the arity stand for unseen categories.
            StatType::Categorical { .. } => v >= 0.0 && v.fract() == 0.0,
        };
        if !ok {
            return Err(MspnError::Query(format!(
                "value {v} is not valid for variable `{}` ({:?})",
                mspn.schema().name(var),
                mspn.stat_type(var)
            )));
        }
    }
    Ok(())
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Bottom-up pass computing the log value of every node. Subtrees without
/// observed variables integrate to one and are set to exactly zero.
fn upward_sum(mspn: &Mspn, evidence: &Evidence, stats: &mut QueryStats) -> Vec<f64> {
    let nodes = mspn.nodes();
    let mut value = vec![0.0; nodes.len()];
    let mut observed = vec![false; nodes.len()];
    for &id in mspn.post_order() {
        stats.visits += 1;
        let (v, obs) = match &nodes[id].kind {
            NodeKind::Leaf { leaf } => match evidence.observed(leaf.variable()) {
                Some(x) => (leaf.density(x).ln(), true),
                None => (0.0, false),
            },
            NodeKind::Product { children } => {
                let obs = children.iter().any(|&c| observed[c]);
                (children.iter().map(|&c| value[c]).sum(), obs)
            }
            NodeKind::Sum { weights, children } => {
                if children.iter().any(|&c| observed[c]) {
                    let terms = weights.iter().zip(children).map(|(w, &c)| w.ln() + value[c]);
                    (log_sum_exp(terms), true)
                } else {
                    (0.0, false)
                }
            }
        };
        value[id] = v;
        observed[id] = obs;
    }
    value
}

pub fn log_evaluate(mspn: &Mspn, evidence: &Evidence) -> Result<f64> {
    log_evaluate_with_stats(mspn, evidence).map(|(v, _)| v)
}

pub fn log_evaluate_with_stats(mspn: &Mspn, evidence: &Evidence) -> Result<(f64, QueryStats)> {
    check_evidence(mspn, evidence)?;
    let mut stats = QueryStats::default();
    let values = upward_sum(mspn, evidence, &mut stats);
    Ok((values[mspn.root()], stats))
}

/// `log p(query | given)`, computed as the difference of two evaluations.
pub fn log_conditional(mspn: &Mspn, query: &Evidence, given: &Evidence) -> Result<f64> {
    let merged = query.merge(given)?;
    let denom = log_evaluate(mspn, given)?;
    if !(denom > f64::NEG_INFINITY) {
        return Err(MspnError::Conditioning);
    }
    Ok(log_evaluate(mspn, &merged)? - denom)
}

/// Approximate most probable completion of the evidence: a max-product
/// pass followed by a descent along the maximizing children. The returned
/// value is the log evaluation of the completed assignment.
pub fn mpe(mspn: &Mspn, evidence: &Evidence) -> Result<(Assignment, f64)> {
    mpe_with_stats(mspn, evidence).map(|(a, v, _)| (a, v))
}

/// As [`mpe`]; the stats count the two passes of the search itself.
pub fn mpe_with_stats(mspn: &Mspn, evidence: &Evidence) -> Result<(Assignment, f64, QueryStats)> {
    check_evidence(mspn, evidence)?;
    let nodes = mspn.nodes();
    let mut stats = QueryStats::default();
    let mut value = vec![0.0; nodes.len()];
    let mut best_child = vec![0usize; nodes.len()];
    for &id in mspn.post_order() {
        stats.visits += 1;
        value[id] = match &nodes[id].kind {
            NodeKind::Leaf { leaf } => {
                let x = evidence.observed(leaf.variable()).unwrap_or_else(|| leaf.mode());
                leaf.density(x).ln()
            }
            NodeKind::Product { children } => children.iter().map(|&c| value[c]).sum(),
            NodeKind::Sum { weights, children } => {
                let mut top = f64::NEG_INFINITY;
                let mut arg = 0;
                for (i, (w, &c)) in weights.iter().zip(children).enumerate() {
                    let v = w.ln() + value[c];
                    if v > top {
                        top = v;
                        arg = i;
                    }
                }
                best_child[id] = arg;
                top
            }
        };
    }

    let mut assignment: Vec<f64> = (0..mspn.n_vars())
        .map(|v| evidence.observed(v).unwrap_or(f64::NAN))
        .collect();
    descend(mspn, &mut stats, |id, stack| match &nodes[id].kind {
        NodeKind::Leaf { leaf } => {
            let var = leaf.variable();
            if evidence.observed(var).is_none() {
                assignment[var] = leaf.mode();
            }
        }
        NodeKind::Product { children } => stack.extend(children.iter().rev()),
        NodeKind::Sum { children, .. } => stack.push(children[best_child[id]]),
    });

    let assignment = Assignment(assignment);
    let value = log_evaluate(mspn, &assignment.to_evidence())?;
    Ok((assignment, value, stats))
}

fn descend(mspn: &Mspn, stats: &mut QueryStats, mut visit: impl FnMut(NodeId, &mut Vec<NodeId>)) {
    let mut stack = vec![mspn.root()];
    while let Some(id) = stack.pop() {
        stats.visits += 1;
        visit(id, &mut stack);
    }
}

/// Draws a complete assignment from the distribution conditioned on the
/// evidence. Observed values are copied through.
pub fn sample(mspn: &Mspn, evidence: &Evidence, rng: &mut impl Rng) -> Result<Assignment> {
    sample_with_stats(mspn, evidence, rng).map(|(a, _)| a)
}

pub fn sample_with_stats(mspn: &Mspn, evidence: &Evidence, rng: &mut impl Rng) -> Result<(Assignment, QueryStats)> {
    check_evidence(mspn, evidence)?;
    let nodes = mspn.nodes();
    let mut stats = QueryStats::default();
    let value = upward_sum(mspn, evidence, &mut stats);
    if !(value[mspn.root()] > f64::NEG_INFINITY) {
        return Err(MspnError::Conditioning);
    }

    let mut assignment: Vec<f64> = (0..mspn.n_vars())
        .map(|v| evidence.observed(v).unwrap_or(f64::NAN))
        .collect();
    descend(mspn, &mut stats, |id, stack| match &nodes[id].kind {
        NodeKind::Leaf { leaf } => {
            let var = leaf.variable();
            if evidence.observed(var).is_none() {
                assignment[var] = leaf.sample(rng);
            }
        }
        NodeKind::Product { children } => stack.extend(children.iter().rev()),
        NodeKind::Sum { weights, children } => {
            let logs: Vec<f64> = weights.iter().zip(children).map(|(w, &c)| w.ln() + value[c]).collect();
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let probs: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
            let target = rng.random::<f64>() * probs.iter().sum::<f64>();
            let mut acc = 0.0;
            let mut pick = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if p > 0.0 && target < acc {
                    pick = i;
                    break;
                }
            }
            stack.push(children[pick]);
        }
    });
    Ok((Assignment(assignment), stats))
}

/// Log value of each fully observed row.
pub fn log_likelihoods(mspn: &Mspn, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter().map(|r| log_evaluate(mspn, &Evidence::complete(r))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, ColumnType, Schema};
    use crate::leaves::{HistogramLeaf, PiecewiseDensity, PiecewiseLinearLeaf};
    use crate::numerics::rng_from_seed;
    use crate::structure::{LearnConfig, MspnNode};

    fn schema(n: usize) -> Schema {
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

    fn hist_leaf(var: usize, edges: &[f64], masses: &[f64]) -> MspnNode {
        MspnNode {
            scope: vec![var],
            kind: NodeKind::Leaf {
                leaf: PiecewiseDensity::Histogram(HistogramLeaf {
                    variable: var,
                    stat_type: StatType::Continuous,
                    bin_edges: edges.to_vec(),
                    masses: masses.to_vec(),
                    delta: 0.0,
                    unseen_mass: 0.0,
                }),
            },
        }
    }

    fn tent_leaf(var: usize, x: [f64; 3]) -> MspnNode {
        let h = x[2] - x[0];
        MspnNode {
            scope: vec![var],
            kind: NodeKind::Leaf {
                leaf: PiecewiseDensity::PiecewiseLinear(PiecewiseLinearLeaf {
                    variable: var,
                    stat_type: StatType::Continuous,
                    knots_x: x.to_vec(),
                    knots_y: vec![0.0, 2.0 / h, 0.0],
                    mode_index: 1,
                }),
            },
        }
    }

    /// Sum(0.3, 0.7) over two products of histogram leaves on [0, 2].
    fn toy() -> Mspn {
        let nodes = vec![
            MspnNode {
                scope: vec![0, 1],
                kind: NodeKind::Sum {
                    weights: vec![0.3, 0.7],
                    children: vec![1, 4],
                },
            },
            MspnNode {
                scope: vec![0, 1],
                kind: NodeKind::Product { children: vec![2, 3] },
            },
            hist_leaf(0, &[0.0, 1.0, 2.0], &[0.8, 0.2]),
            hist_leaf(1, &[0.0, 1.0, 2.0], &[0.4, 0.6]),
            MspnNode {
                scope: vec![0, 1],
                kind: NodeKind::Product { children: vec![5, 6] },
            },
            hist_leaf(0, &[0.0, 1.0, 2.0], &[0.1, 0.9]),
            hist_leaf(1, &[0.0, 1.0, 2.0], &[0.5, 0.5]),
        ];
        Mspn::from_nodes(schema(2), LearnConfig::default(), nodes, 0).unwrap()
    }

    fn tent_mixture() -> Mspn {
        let nodes = vec![
            MspnNode {
                scope: vec![0, 1],
                kind: NodeKind::Sum {
                    weights: vec![0.4, 0.6],
                    children: vec![1, 4],
                },
            },
            MspnNode {
                scope: vec![0, 1],
                kind: NodeKind::Product { children: vec![2, 3] },
            },
            tent_leaf(0, [0.0, 1.0, 2.0]),
            tent_leaf(1, [0.0, 0.5, 3.0]),
            MspnNode {
                scope: vec![0, 1],
                kind: NodeKind::Product { children: vec![5, 6] },
            },
            tent_leaf(0, [1.0, 2.5, 3.0]),
            tent_leaf(1, [1.0, 2.0, 4.0]),
        ];
        Mspn::from_nodes(schema(2), LearnConfig::default(), nodes, 0).unwrap()
    }

    #[test]
    fn all_marginalized_is_exactly_zero() {
        let m = toy();
        assert_eq!(log_evaluate(&m, &Evidence::marginal(2)).unwrap(), 0.0);
    }

    #[test]
    fn single_unit_box_leaf() {
        let m = Mspn::from_nodes(schema(1), LearnConfig::default(), vec![hist_leaf(0, &[0.0, 1.0], &[1.0])], 0).unwrap();
        assert_eq!(log_evaluate(&m, &Evidence::complete(&[0.5])).unwrap(), 0.0);
        let (a, v) = mpe(&m, &Evidence::marginal(1)).unwrap();
        assert_eq!(a.values(), &[0.5]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn toy_network_matches_hand_evaluation() {
        let m = toy();
        let got = log_evaluate(&m, &Evidence::complete(&[0.5, 1.5])).unwrap();
        let expected = (0.3 * 0.8 * 0.6 + 0.7 * 0.1 * 0.5f64).ln();
        assert!((got - expected).abs() < 1e-14);

        let marg = log_evaluate(&m, &Evidence::marginal(2).with(0, 1.2)).unwrap();
        assert!((marg - (0.3 * 0.2 + 0.7 * 0.9f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn wrong_type_is_query_error() {
        let m = toy();
        assert!(matches!(log_evaluate(&m, &Evidence::complete(&[f64::NAN, 0.0])), Err(MspnError::Query(_))));
        assert!(matches!(log_evaluate(&m, &Evidence::marginal(3)), Err(MspnError::Query(_))));
    }

    #[test]
    fn conditional_identities() {
        let m = toy();
        let q = Evidence::marginal(2).with(0, 0.5);
        let g = Evidence::marginal(2).with(1, 1.5);
        let c = log_conditional(&m, &q, &g).unwrap();
        let lg = log_evaluate(&m, &g).unwrap();
        let lm = log_evaluate(&m, &q.merge(&g).unwrap()).unwrap();
        assert!((c + lg - lm).abs() < 1e-12);
        assert_eq!(log_conditional(&m, &q, &Evidence::marginal(2)).unwrap(), log_evaluate(&m, &q).unwrap());
        let outside = Evidence::marginal(2).with(1, 7.0);
        assert!(matches!(log_conditional(&m, &q, &outside), Err(MspnError::Conditioning)));
        assert!(matches!(log_conditional(&m, &q, &q), Err(MspnError::Query(_))));
    }

    #[test]
    fn conditional_on_independent_variable_is_marginal() {
        let nodes = vec![
            MspnNode {
                scope: vec![0, 1],
                kind: NodeKind::Product { children: vec![1, 2] },
            },
            hist_leaf(0, &[0.0, 1.0, 2.0], &[0.25, 0.75]),
            hist_leaf(1, &[0.0, 1.0, 3.0], &[0.5, 0.5]),
        ];
        let m = Mspn::from_nodes(schema(2), LearnConfig::default(), nodes, 0).unwrap();
        let q = Evidence::marginal(2).with(0, 1.5);
        let g = Evidence::marginal(2).with(1, 2.0);
        let c = log_conditional(&m, &q, &g).unwrap();
        assert!((c - log_evaluate(&m, &q).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mpe_fully_observed_is_identity() {
        let m = toy();
        let ev = Evidence::complete(&[0.3, 1.7]);
        let (a, v) = mpe(&m, &ev).unwrap();
        assert_eq!(a.values(), &[0.3, 1.7]);
        assert_eq!(v, log_evaluate(&m, &ev).unwrap());
    }

    #[test]
    fn mpe_matches_grid_search() {
        let m = tent_mixture();
        let grid: Vec<f64> = (0..100).map(|i| i as f64 * 0.04).collect();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for &x in &grid {
            for &y in &grid {
                let v = log_evaluate(&m, &Evidence::complete(&[x, y])).unwrap();
                if v > best.0 {
                    best = (v, x, y);
                }
            }
        }
        let (a, v) = mpe(&m, &Evidence::marginal(2)).unwrap();
        assert!(v >= best.0 - 1e-12, "mpe {v} vs grid {}", best.0);
        assert!((a.values()[0] - 2.5).abs() < 1e-12 && (a.values()[1] - 2.0).abs() < 1e-12);

        // With evidence on one variable the free one is searched alone.
        let ev = Evidence::marginal(2).with(1, 0.5);
        let (a, v) = mpe(&m, &ev).unwrap();
        let grid_best = grid
            .iter()
            .map(|&x| log_evaluate(&m, &Evidence::complete(&[x, 0.5])).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(v >= grid_best - 1e-12);
        assert_eq!(a.values()[1], 0.5);
    }

    #[test]
    fn deterministic_sum_always_takes_first_child() {
        let nodes = vec![
            MspnNode {
                scope: vec![0],
                kind: NodeKind::Sum {
                    weights: vec![1.0, 0.0],
                    children: vec![1, 2],
                },
            },
            hist_leaf(0, &[0.0, 1.0], &[1.0]),
            hist_leaf(0, &[5.0, 6.0], &[1.0]),
        ];
        let m = Mspn::from_nodes(schema(1), LearnConfig::default(), nodes, 0).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..500 {
            let a = sample(&m, &Evidence::marginal(1), &mut rng).unwrap();
            assert!(a.values()[0] < 1.0);
        }
    }

    #[test]
    fn sampling_observed_copies_and_zero_evidence_fails() {
        let m = toy();
        let mut rng = rng_from_seed(2);
        let ev = Evidence::complete(&[0.1, 0.2]);
        assert_eq!(sample(&m, &ev, &mut rng).unwrap().values(), &[0.1, 0.2]);
        let impossible = Evidence::marginal(2).with(0, 9.0);
        assert!(matches!(sample(&m, &impossible, &mut rng), Err(MspnError::Conditioning)));
    }

    #[test]
    fn conditional_sampling_respects_posterior_weights() {
        // Given x0 = 1.5, the posterior weight of the first component is
        // 0.3*0.2 / (0.3*0.2 + 0.7*0.9).
        let m = toy();
        let mut rng = rng_from_seed(3);
        let ev = Evidence::marginal(2).with(0, 1.5);
        let n = 40_000;
        let low = (0..n)
            .filter(|_| sample(&m, &ev, &mut rng).unwrap().values()[1] < 1.0)
            .count() as f64
            / n as f64;
        let w = 0.06 / (0.06 + 0.63);
        let expected = w * 0.4 + (1.0 - w) * 0.5;
        assert!((low - expected).abs() < 0.01, "{low} vs {expected}");
    }

    #[test]
    fn visits_bounded_by_two_passes() {
        let m = tent_mixture();
        let ev = Evidence::marginal(2).with(0, 1.2);
        let (_, s) = log_evaluate_with_stats(&m, &ev).unwrap();
        assert_eq!(s.visits, m.n_nodes());
        let (_, _, s) = mpe_with_stats(&m, &ev).unwrap();
        assert!(s.visits <= 2 * m.n_nodes());
        let (_, s) = sample_with_stats(&m, &ev, &mut rng_from_seed(0)).unwrap();
        assert!(s.visits <= 2 * m.n_nodes());
    }
}
