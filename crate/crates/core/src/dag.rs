//! Directed graphs induced by coefficient matrices, Kahn sorting, and cycle
//! elimination by repeated removal of the weakest edge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::model::CoefMatrix;

/// Simple directed graph on nodes `0..p` without self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DirectedGraph {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    pub fn new(p: usize) -> Self {
        DirectedGraph {
            p,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph from an edge list; self-loops and out-of-range edges are
    /// dropped.
    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = DirectedGraph::new(p);
        for (i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        if i == j || i >= self.p || j >= self.p {
            return false;
        }
        self.edges.insert((i, j))
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        self.edges.remove(&(i, j))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == j).map(|e| e.0).collect()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.edges.iter().filter(|e| e.1 == j).count()
    }

    /// `i -> j` per line, one-based labels.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (i, j) in &self.edges {
            let _ = writeln!(s, "{} -> {}", i + 1, j + 1);
        }
        s
    }

    /// p×p 0/1 adjacency matrix as CSV, row i column j set for edge i→j.
    pub fn to_adjacency_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.p {
            let row: Vec<&str> = (0..self.p)
                .map(|j| if self.has_edge(i, j) { "1" } else { "0" })
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Edge (i→j) iff |β_ij| > threshold.
pub fn graph_from_coefs(b: &CoefMatrix, threshold: f64) -> DirectedGraph {
    DirectedGraph::from_edges(b.p(), b.edges(threshold))
}

/// True when Kahn's procedure empties the graph without stalling.
pub fn is_dag(g: &DirectedGraph) -> bool {
    let mut indeg = vec![0usize; g.p];
    let mut children = vec![Vec::new(); g.p];
    for (i, j) in g.edges() {
        indeg[j] += 1;
        children[i].push(j);
    }
    let mut stack: Vec<usize> = (0..g.p).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                stack.push(c);
            }
        }
    }
    seen == g.p
}

/// How weak an edge is: larger p-value is weaker; ties are broken by the
/// smaller coefficient magnitude, then by the smaller (i, j).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeakness {
    pub p_value: f64,
    pub magnitude: f64,
}

impl EdgeWeakness {
    pub fn new(p_value: f64, magnitude: f64) -> Self {
        EdgeWeakness { p_value, magnitude }
    }
}

/// Edges without an entry are treated as maximally weak (p-value 1, |β| 0).
pub type WeaknessMap = BTreeMap<(usize, usize), EdgeWeakness>;

/// Output of [`kahn_eliminate`].
#[derive(Debug, Clone, PartialEq)]
pub struct TopoResult {
    /// Nodes in the order they were queued.
    pub order: Vec<usize>,
    /// Edges removed to break cycles, in removal order.
    pub removed_edges: Vec<(usize, usize)>,
    pub dag: DirectedGraph,
}

fn weaker(a: (&(usize, usize), EdgeWeakness), b: (&(usize, usize), EdgeWeakness)) -> bool {
    // true when `a` should be removed in preference to `b`
    let (ea, wa) = a;
    let (eb, wb) = b;
    if wa.p_value != wb.p_value {
        return wa.p_value > wb.p_value;
    }
    if wa.magnitude != wb.magnitude {
        return wa.magnitude < wb.magnitude;
    }
    ea < eb
}

/// Kahn sorting with weakest-edge removal.
///
/// While nodes remain: if some remaining nodes have no incoming edge from the
/// remaining graph, all of them are queued (ascending index) and deleted
/// together with their outgoing edges; otherwise the weakest edge among the
/// remaining nodes is removed and the check repeats.
pub fn kahn_eliminate(g: &DirectedGraph, weakness: &WeaknessMap) -> TopoResult {
    let p = g.p;
    let default = EdgeWeakness::new(1.0, 0.0);
    let mut live: BTreeSet<(usize, usize)> = g.edges.clone();
    let mut remaining: BTreeSet<usize> = (0..p).collect();
    let mut order = Vec::with_capacity(p);
    let mut removed = Vec::new();

    while !remaining.is_empty() {
        let roots: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&v| !live.iter().any(|&(_, c)| c == v))
            .collect();
        if roots.is_empty() {
            let mut pick: Option<((usize, usize), EdgeWeakness)> = None;
            for e in &live {
                let w = weakness.get(e).copied().unwrap_or(default);
                pick = match pick {
                    None => Some((*e, w)),
                    Some((pe, pw)) => {
                        if weaker((e, w), (&pe, pw)) {
                            Some((*e, w))
                        } else {
                            Some((pe, pw))
                        }
                    }
                };
            }
            let (e, _) = pick.expect("a stalled graph has at least one edge");
            live.remove(&e);
            removed.push(e);
            continue;
        }
        for &r in &roots {
            remaining.remove(&r);
            order.push(r);
        }
        live.retain(|&(i, _)| !roots.contains(&i));
    }

    let mut dag = g.clone();
    for &(i, j) in &removed {
        dag.remove_edge(i, j);
    }
    TopoResult {
        order,
        removed_edges: removed,
        dag,
    }
}

/// Every edge goes from an earlier to a later node in `order`.
pub fn order_is_topological(g: &DirectedGraph, order: &[usize]) -> bool {
    if order.len() != g.p {
        return false;
    }
    let mut pos = vec![usize::MAX; g.p];
    for (k, &v) in order.iter().enumerate() {
        if v >= g.p || pos[v] != usize::MAX {
            return false;
        }
        pos[v] = k;
    }
    g.edges().all(|(i, j)| pos[i] < pos[j])
}
