//! Graph-recovery metrics against a known truth.

use serde::{Deserialize, Serialize};

use crate::dag::DirectedGraph;
use crate::error::{CsbnError, Result};
use crate::model::CoefMatrix;

/// How the correctness rate counts pairs with no edge in either graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectnessRule {
    /// Unordered pairs unconnected in both graphs; bounded by 1.
    #[default]
    Bounded,
    /// Ordered pairs absent from both edge sets over the unordered-pair
    /// denominator; can exceed 1.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEval {
    pub tpr: f64,
    pub fdr: f64,
    pub specificity: f64,
    pub correctness: f64,
    /// Present when coefficient matrices were compared.
    pub frob_scaled: Option<f64>,
    pub true_positives: usize,
    pub reversed: usize,
    pub spurious: usize,
    pub estimated_edges: usize,
    pub true_edges: usize,
}

pub fn evaluate_graph(g_hat: &DirectedGraph, g_true: &DirectedGraph) -> Result<GraphEval> {
    evaluate_graph_with(g_hat, g_true, CorrectnessRule::Bounded)
}

pub fn evaluate_graph_with(
    g_hat: &DirectedGraph,
    g_true: &DirectedGraph,
    rule: CorrectnessRule,
) -> Result<GraphEval> {
    let p = g_true.p();
    if g_hat.p() != p {
        return Err(CsbnError::invalid(format!(
            "graphs have different node counts ({} vs {p})",
            g_hat.p()
        )));
    }
    let (mut tp, mut rev, mut spur) = (0, 0, 0);
    for (i, j) in g_hat.edges() {
        if g_true.has_edge(i, j) {
            tp += 1;
        } else if g_true.has_edge(j, i) {
            rev += 1;
        } else {
            spur += 1;
        }
    }
    let e_hat = g_hat.n_edges();
    let e_true = g_true.n_edges();
    let ordered = p * (p - 1);
    let both_absent_ordered = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && !g_hat.has_edge(i, j) && !g_true.has_edge(i, j))
        .count();
    let unconnected_pairs = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            !g_hat.has_edge(i, j) && !g_hat.has_edge(j, i) && !g_true.has_edge(i, j) && !g_true.has_edge(j, i)
        })
        .count();
    let negatives = ordered - e_true;
    let agree = match rule {
        CorrectnessRule::Bounded => unconnected_pairs,
        CorrectnessRule::Literal => both_absent_ordered,
    };
    let ratio = |a: usize, b: usize, empty: f64| if b == 0 { empty } else { a as f64 / b as f64 };
    Ok(GraphEval {
        tpr: ratio(tp, e_true, 0.0),
        fdr: ratio(rev + spur, e_hat, 0.0),
        specificity: ratio(both_absent_ordered, negatives, 1.0),
        correctness: ratio(tp + agree, ordered / 2, 0.0),
        frob_scaled: None,
        true_positives: tp,
        reversed: rev,
        spurious: spur,
        estimated_edges: e_hat,
        true_edges: e_true,
    })
}

/// ‖B − B̂‖²_F / (p(p−1)).
pub fn frob_scaled(b_true: &CoefMatrix, b_hat: &CoefMatrix) -> Result<f64> {
    let p = b_true.p();
    if b_hat.p() != p {
        return Err(CsbnError::invalid("coefficient matrices have different sizes"));
    }
    let d = b_true.as_matrix() - b_hat.as_matrix();
    Ok(d.norm_squared() / (p * (p - 1)) as f64)
}

/// Structural metrics on the thresholded graphs plus the scaled Frobenius norm.
pub fn evaluate_coefs(b_hat: &CoefMatrix, b_true: &CoefMatrix, threshold: f64, rule: CorrectnessRule) -> Result<GraphEval> {
    let g_hat = crate::dag::graph_from_coefs(b_hat, threshold);
    let g_true = crate::dag::graph_from_coefs(b_true, threshold);
    let mut e = evaluate_graph_with(&g_hat, &g_true, rule)?;
    e.frob_scaled = Some(frob_scaled(b_true, b_hat)?);
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn hand_example() {
        let t = DirectedGraph::from_edges(4, [(0, 1), (1, 2)]);
        let h = DirectedGraph::from_edges(4, [(1, 0), (1, 2)]);
        let e = evaluate_graph(&h, &t).unwrap();
        assert_eq!(e.tpr, 0.5);
        assert_eq!(e.reversed, 1);
        assert_eq!(e.fdr, 0.5);
        assert_eq!(e.specificity, 0.9);
        // pairs {0,1} and {1,2} connected; 4 of 6 unordered pairs unconnected
        assert!((e.correctness - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty() {
        let t = DirectedGraph::from_edges(4, [(0, 1), (1, 2), (0, 3)]);
        let e = evaluate_graph(&t, &t).unwrap();
        assert_eq!((e.tpr, e.fdr, e.specificity, e.correctness), (1.0, 0.0, 1.0, 1.0));
        let e = evaluate_graph(&DirectedGraph::new(4), &t).unwrap();
        assert_eq!((e.tpr, e.fdr, e.specificity), (0.0, 0.0, 1.0));
        assert_eq!(e.correctness, 0.5);
        assert!(evaluate_graph(&DirectedGraph::new(3), &t).is_err());
    }

    #[test]
    fn literal_rule_can_exceed_one() {
        let t = DirectedGraph::new(3);
        let e = evaluate_graph_with(&t, &t, CorrectnessRule::Literal).unwrap();
        assert_eq!(e.correctness, 2.0);
    }

    #[test]
    fn frob_examples() {
        let a = CoefMatrix::zeros(2);
        let mut b = CoefMatrix::zeros(2);
        b.set(0, 1, 0.3);
        assert!((frob_scaled(&a, &b).unwrap() - 0.09 / 2.0).abs() < 1e-15);
        assert_eq!(frob_scaled(&b, &b).unwrap(), 0.0);
        let c = CoefMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.9, 0.0, 0.0])).unwrap();
        assert!((frob_scaled(&a, &c).unwrap() - 9.0 * frob_scaled(&a, &b).unwrap()).abs() < 1e-15);
    }
}
