//! Nominal feedback graphs and the graph quantities the learners need.
//!
//! Expert indices are 0-based throughout the Rust API. The graph file format,
//! the CLI and the Python bindings use 1-based indices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest K accepted by [`independence_number`].
pub const MAX_EXACT_INDEPENDENCE_K: usize = 25;

/// Directed feedback graph over `K` experts. An edge `(i, j)` means that
/// choosing `i` may reveal the loss of `j`. Every vertex carries a self-loop.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NominalGraph {
    k: usize,
    adjacency: Vec<bool>,
}

impl NominalGraph {
    /// Builds a graph from a row-major `K x K` adjacency matrix.
    pub fn from_adjacency(adjacency: Vec<Vec<bool>>) -> Result<Self> {
        let k = adjacency.len();
        if k == 0 {
            return Err(Error::arg("a feedback graph needs at least one expert"));
        }
        let mut flat = Vec::with_capacity(k * k);
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != k {
                return Err(Error::arg(format!(
                    "adjacency row {} has length {}, expected {k}",
                    i + 1,
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        let g = NominalGraph { k, adjacency: flat };
        g.check_self_loops()?;
        Ok(g)
    }

    /// Builds a graph from an edge list. Self-loops must be listed explicitly.
    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("a feedback graph needs at least one expert"));
        }
        let mut adjacency = vec![false; k * k];
        for &(i, j) in edges {
            if i >= k {
                return Err(Error::IndexOutOfRange { index: i, k });
            }
            if j >= k {
                return Err(Error::IndexOutOfRange { index: j, k });
            }
            adjacency[i * k + j] = true;
        }
        let g = NominalGraph { k, adjacency };
        g.check_self_loops()?;
        Ok(g)
    }

    /// Fully connected graph (full information).
    pub fn complete(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("a feedback graph needs at least one expert"));
        }
        Ok(NominalGraph {
            k,
            adjacency: vec![true; k * k],
        })
    }

    /// Self-loops only (bandit feedback).
    pub fn bandit(k: usize) -> Result<Self> {
        let edges: Vec<_> = (0..k).map(|i| (i, i)).collect();
        Self::from_edges(k, &edges)
    }

    fn check_self_loops(&self) -> Result<()> {
        match (0..self.k).find(|&i| !self.has_edge(i, i)) {
            Some(i) => Err(Error::arg(format!("expert {} has no self-loop", i + 1))),
            None => Ok(()),
        }
    }

    pub fn num_experts(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.k + j]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.k).flat_map(move |i| (0..self.k).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.k {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, k: self.k })
        }
    }

    /// `{j : (i, j) is an edge}`; always contains `i`.
    pub fn out_neighbors(&self, i: usize) -> Result<VertexSet> {
        self.check_index(i)?;
        Ok(VertexSet((0..self.k).filter(|&j| self.has_edge(i, j)).collect()))
    }

    /// `{j : (j, i) is an edge}`; always contains `i`.
    pub fn in_neighbors(&self, i: usize) -> Result<VertexSet> {
        self.check_index(i)?;
        Ok(VertexSet((0..self.k).filter(|&j| self.has_edge(j, i)).collect()))
    }

    pub(crate) fn out_iter(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |&j| self.has_edge(i, j))
    }

    pub(crate) fn in_iter(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |&j| self.has_edge(j, i))
    }
}

/// Sorted set of distinct expert indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct VertexSet(Vec<usize>);

impl VertexSet {
    /// Sorts and deduplicates; every member must be below `k`.
    pub fn new(mut members: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = members.iter().find(|&&m| m >= k) {
            return Err(Error::IndexOutOfRange { index: bad, k });
        }
        members.sort_unstable();
        members.dedup();
        Ok(VertexSet(members))
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Members as 1-based indices, for display and external interfaces.
    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }
}

/// Greedy set cover over out-neighborhoods: repeatedly takes the vertex that
/// covers the most still-uncovered vertices, lowest index on ties.
pub fn greedy_dominating_set(g: &NominalGraph) -> VertexSet {
    let k = g.num_experts();
    let mut covered = vec![false; k];
    let mut remaining = k;
    let mut chosen = Vec::new();
    while remaining > 0 {
        let mut best = (0usize, 0usize);
        for i in 0..k {
            let gain = g.out_iter(i).filter(|&j| !covered[j]).count();
            if gain > best.1 {
                best = (i, gain);
            }
        }
        // self-loops guarantee gain >= 1 for any uncovered vertex
        debug_assert!(best.1 > 0);
        for j in g.out_iter(best.0) {
            if !covered[j] {
                covered[j] = true;
                remaining -= 1;
            }
        }
        chosen.push(best.0);
    }
    chosen.sort_unstable();
    VertexSet(chosen)
}

/// True when the out-neighborhoods of `set` cover every vertex.
pub fn is_dominating(g: &NominalGraph, set: &VertexSet) -> bool {
    (0..g.num_experts()).all(|j| set.iter().any(|i| g.has_edge(i, j)))
}

/// Exact independence number (self-loops ignored, edges taken in either
/// direction). Exponential in the worst case, so limited to small graphs.
pub fn independence_number(g: &NominalGraph) -> Result<usize> {
    let k = g.num_experts();
    if k > MAX_EXACT_INDEPENDENCE_K {
        return Err(Error::UnsupportedSize(format!(
            "exact independence number supports K <= {MAX_EXACT_INDEPENDENCE_K}, got {k}"
        )));
    }
    let neighbors: Vec<u32> = (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i && (g.has_edge(i, j) || g.has_edge(j, i)))
                .fold(0u32, |m, j| m | (1 << j))
        })
        .collect();
    let all = (1u32 << k) - 1;
    let mut best = 0;
    max_independent(&neighbors, all, 0, &mut best);
    Ok(best)
}

fn max_independent(neighbors: &[u32], candidates: u32, size: usize, best: &mut usize) {
    if candidates == 0 {
        *best = (*best).max(size);
        return;
    }
    if size + candidates.count_ones() as usize <= *best {
        return;
    }
    let v = candidates.trailing_zeros() as usize;
    let without_v = candidates & !(1 << v);
    max_independent(neighbors, without_v & !neighbors[v], size + 1, best);
    max_independent(neighbors, without_v, size, best);
}

/// Per-edge observation probabilities `p_ij` together with their lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbabilityTable {
    k: usize,
    probs: Vec<f64>,
    epsilon: f64,
}

impl EdgeProbabilityTable {
    /// Takes a `K x K` matrix; edge entries must lie in `(0, 1]` and non-edge
    /// entries must be zero. `epsilon` is the smallest edge probability.
    pub fn from_matrix(g: &NominalGraph, probs: &[Vec<f64>]) -> Result<Self> {
        let k = g.num_experts();
        if probs.len() != k || probs.iter().any(|r| r.len() != k) {
            return Err(Error::arg(format!("probability matrix must be {k} x {k}")));
        }
        let mut flat = vec![0.0; k * k];
        let mut epsilon = f64::INFINITY;
        for i in 0..k {
            for j in 0..k {
                let p = probs[i][j];
                if g.has_edge(i, j) {
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(Error::arg(format!(
                            "edge ({}, {}) has probability {p}, expected a value in (0, 1]",
                            i + 1,
                            j + 1
                        )));
                    }
                    flat[i * k + j] = p;
                    epsilon = epsilon.min(p);
                } else if p != 0.0 {
                    return Err(Error::arg(format!(
                        "non-edge ({}, {}) has nonzero probability {p}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(EdgeProbabilityTable { k, probs: flat, epsilon })
    }

    /// Same probability `p` on every edge.
    pub fn equal(g: &NominalGraph, p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::arg(format!("edge probability {p} outside (0, 1]")));
        }
        let k = g.num_experts();
        let mut probs = vec![0.0; k * k];
        for (i, j) in g.edges() {
            probs[i * k + j] = p;
        }
        Ok(EdgeProbabilityTable { k, probs, epsilon: p })
    }

    /// Every edge probability equal to one.
    pub fn unit(g: &NominalGraph) -> Self {
        Self::equal(g, 1.0).expect("1.0 is a valid probability")
    }

    /// Edge probabilities drawn i.i.d. from `U[lo, hi]`; `epsilon = lo`.
    pub fn uniform<R: Rng + ?Sized>(g: &NominalGraph, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::arg(format!("uniform({lo}, {hi}) requires 0 < lo <= hi <= 1")));
        }
        let k = g.num_experts();
        let mut probs = vec![0.0; k * k];
        for (i, j) in g.edges() {
            probs[i * k + j] = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        }
        Ok(EdgeProbabilityTable { k, probs, epsilon: lo })
    }

    pub fn num_experts(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.k + j]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Row-major copy of the matrix.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    /// Checks that the table covers exactly the edges of `g`.
    pub fn check_consistent(&self, g: &NominalGraph) -> Result<()> {
        if self.k != g.num_experts() {
            return Err(Error::arg(format!(
                "probability table has K = {}, graph has K = {}",
                self.k,
                g.num_experts()
            )));
        }
        for (i, j) in g.edges() {
            if !(self.get(i, j) >= self.epsilon && self.get(i, j) <= 1.0 && self.epsilon > 0.0) {
                return Err(Error::arg(format!(
                    "edge ({}, {}) has probability {} outside [{}, 1]",
                    i + 1,
                    j + 1,
                    self.get(i, j),
                    self.epsilon
                )));
            }
        }
        Ok(())
    }
}

/// Expected number of losses revealed when expert `i` is chosen:
/// the sum of `p_ij` over its out-neighbors.
pub fn expected_observations(g: &NominalGraph, p: &EdgeProbabilityTable, i: usize) -> Result<f64> {
    g.check_index(i)?;
    Ok(g.out_iter(i).map(|j| p.get(i, j)).sum())
}

/// A graph literal loaded from a file, with probabilities when every edge
/// carried one.
#[derive(Debug, Clone)]
pub struct GraphLiteral {
    pub graph: NominalGraph,
    pub probabilities: Option<EdgeProbabilityTable>,
}

/// Parses the graph literal format:
///
/// ```text
/// K=4
/// bandit            # self-loops on every vertex, optional probability
/// edge 1 2 0.5      # 1-based endpoints, optional probability
/// complete 0.25     # every ordered pair including self-loops
/// ```
///
/// `#` starts a comment. Missing self-loops are an error.
pub fn parse_graph_literal(text: &str) -> Result<GraphLiteral> {
    let mut k: Option<usize> = None;
    let mut edges: Vec<(usize, usize, Option<f64>)> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse { line: line_no, message };

        if k.is_none() {
            let value = line
                .strip_prefix("K=")
                .or_else(|| line.strip_prefix("K ="))
                .ok_or_else(|| perr(format!("expected `K=<int>`, found `{line}`")))?;
            let parsed: usize = value
                .trim()
                .parse()
                .map_err(|_| perr(format!("invalid expert count `{}`", value.trim())))?;
            if parsed == 0 {
                return Err(perr("K must be at least 1".into()));
            }
            k = Some(parsed);
            continue;
        }
        let k = k.expect("checked above");

        let tokens: Vec<&str> = line.split_whitespace().collect();
        let parse_p = |tok: Option<&&str>| -> Result<Option<f64>> {
            match tok {
                None => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| perr(format!("invalid probability `{s}`"))),
            }
        };
        match tokens[0] {
            "edge" => {
                if tokens.len() < 3 || tokens.len() > 4 {
                    return Err(perr("expected `edge <i> <j> [p]`".into()));
                }
                let idx = |s: &str| -> Result<usize> {
                    let v: usize = s.parse().map_err(|_| perr(format!("invalid index `{s}`")))?;
                    if v == 0 || v > k {
                        return Err(perr(format!("index {v} outside 1..={k}")));
                    }
                    Ok(v - 1)
                };
                let (i, j) = (idx(tokens[1])?, idx(tokens[2])?);
                edges.push((i, j, parse_p(tokens.get(3))?));
            }
            "complete" | "bandit" => {
                if tokens.len() > 2 {
                    return Err(perr(format!("expected `{} [p]`", tokens[0])));
                }
                let p = parse_p(tokens.get(1))?;
                for i in 0..k {
                    if tokens[0] == "complete" {
                        edges.extend((0..k).map(|j| (i, j, p)));
                    } else {
                        edges.push((i, i, p));
                    }
                }
            }
            other => return Err(perr(format!("unknown directive `{other}`"))),
        }
    }

    let k = k.ok_or(Error::Parse {
        line: 0,
        message: "empty graph file (missing `K=<int>`)".into(),
    })?;
    let pairs: Vec<(usize, usize)> = edges.iter().map(|&(i, j, _)| (i, j)).collect();
    let graph = NominalGraph::from_edges(k, &pairs)?;

    let with_p = edges.iter().filter(|e| e.2.is_some()).count();
    let probabilities = if with_p == 0 {
        None
    } else if with_p < edges.len() {
        return Err(Error::arg(
            "either every edge or no edge may carry a probability",
        ));
    } else {
        let mut m = vec![vec![0.0; k]; k];
        for &(i, j, p) in &edges {
            m[i][j] = p.expect("all edges carry a probability");
        }
        Some(EdgeProbabilityTable::from_matrix(&graph, &m)?)
    };
    Ok(GraphLiteral { graph, probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(k: usize) -> NominalGraph {
        let mut edges: Vec<_> = (0..k).map(|i| (i, i)).collect();
        edges.extend((1..k).map(|j| (0, j)));
        NominalGraph::from_edges(k, &edges).unwrap()
    }

    #[test]
    fn neighborhoods() {
        let c = NominalGraph::complete(3).unwrap();
        assert_eq!(c.out_neighbors(0).unwrap().as_slice(), &[0, 1, 2]);
        assert_eq!(c.in_neighbors(1).unwrap().as_slice(), &[0, 1, 2]);

        let b = NominalGraph::bandit(4).unwrap();
        assert_eq!(b.out_neighbors(1).unwrap().as_slice(), &[1]);
        assert_eq!(b.in_neighbors(3).unwrap().as_slice(), &[3]);

        let s = star(4);
        assert_eq!(s.out_neighbors(2).unwrap().as_slice(), &[2]);
        assert_eq!(s.in_neighbors(2).unwrap().as_slice(), &[0, 2]);

        assert!(matches!(c.out_neighbors(3), Err(Error::IndexOutOfRange { index: 3, k: 3 })));
        assert!(c.in_neighbors(7).is_err());
    }

    #[test]
    fn missing_self_loop_rejected() {
        assert!(NominalGraph::from_edges(2, &[(0, 0), (0, 1)]).is_err());
        assert!(NominalGraph::from_adjacency(vec![vec![true, true], vec![true, false]]).is_err());
        assert!(NominalGraph::from_adjacency(vec![]).is_err());
    }

    #[test]
    fn dominating_sets() {
        assert_eq!(greedy_dominating_set(&NominalGraph::complete(5).unwrap()).as_slice(), &[0]);
        assert_eq!(
            greedy_dominating_set(&NominalGraph::bandit(4).unwrap()).as_slice(),
            &[0, 1, 2, 3]
        );
        // 1 -> {1,2,3}, 4 -> {4,5}
        let g = NominalGraph::from_edges(5, &[(0, 0), (0, 1), (0, 2), (1, 1), (2, 2), (3, 3), (3, 4), (4, 4)])
            .unwrap();
        let d = greedy_dominating_set(&g);
        assert_eq!(d.as_slice(), &[0, 3]);
        // brute force: no single vertex dominates, so {1,4} is minimum
        assert!((0..5).all(|v| !is_dominating(&g, &VertexSet(vec![v]))));
        assert!(is_dominating(&g, &d));
    }

    #[test]
    fn independence() {
        assert_eq!(independence_number(&NominalGraph::complete(6).unwrap()).unwrap(), 1);
        assert_eq!(independence_number(&NominalGraph::bandit(7).unwrap()).unwrap(), 7);
        let mut edges: Vec<_> = (0..5).map(|i| (i, i)).collect();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push(((i + 1) % 5, i));
        }
        let cycle = NominalGraph::from_edges(5, &edges).unwrap();
        assert_eq!(independence_number(&cycle).unwrap(), 2);
        assert!(matches!(
            independence_number(&NominalGraph::bandit(26).unwrap()),
            Err(Error::UnsupportedSize(_))
        ));
        assert_eq!(independence_number(&NominalGraph::bandit(25).unwrap()).unwrap(), 25);
    }

    #[test]
    fn observation_counts() {
        let c3 = NominalGraph::complete(3).unwrap();
        let p = EdgeProbabilityTable::equal(&c3, 0.25).unwrap();
        assert!((expected_observations(&c3, &p, 0).unwrap() - 0.75).abs() < 1e-15);

        let b = NominalGraph::bandit(3).unwrap();
        let u = EdgeProbabilityTable::unit(&b);
        assert_eq!(expected_observations(&b, &u, 2).unwrap(), 1.0);

        let c2 = NominalGraph::complete(2).unwrap();
        let p = EdgeProbabilityTable::from_matrix(&c2, &[vec![0.5, 0.5], vec![0.3, 0.9]]).unwrap();
        assert!((expected_observations(&c2, &p, 1).unwrap() - 1.2).abs() < 1e-15);
        assert_eq!(p.epsilon(), 0.3);
        assert!(expected_observations(&c2, &p, 2).is_err());
    }

    #[test]
    fn probability_table_validation() {
        let b = NominalGraph::bandit(2).unwrap();
        assert!(EdgeProbabilityTable::from_matrix(&b, &[vec![0.5, 0.1], vec![0.0, 0.5]]).is_err());
        assert!(EdgeProbabilityTable::from_matrix(&b, &[vec![0.0, 0.0], vec![0.0, 0.5]]).is_err());
        assert!(EdgeProbabilityTable::equal(&b, 1.5).is_err());
        let mut rng = rand::thread_rng();
        assert!(EdgeProbabilityTable::uniform(&b, 0.5, 0.25, &mut rng).is_err());
        let u = EdgeProbabilityTable::uniform(&NominalGraph::complete(4).unwrap(), 0.25, 0.5, &mut rng).unwrap();
        assert_eq!(u.epsilon(), 0.25);
        for i in 0..4 {
            for j in 0..4 {
                assert!((0.25..=0.5).contains(&u.get(i, j)));
            }
        }
    }

    #[test]
    fn graph_literals() {
        let lit = parse_graph_literal("K=3\n# comment\ncomplete 0.25\n").unwrap();
        assert_eq!(lit.graph, NominalGraph::complete(3).unwrap());
        assert_eq!(lit.probabilities.unwrap().get(2, 0), 0.25);

        let lit = parse_graph_literal("K=3\nbandit\nedge 1 3\n").unwrap();
        assert!(lit.graph.has_edge(0, 2));
        assert!(!lit.graph.has_edge(2, 0));
        assert!(lit.probabilities.is_none());

        // missing self-loop on expert 2
        assert!(parse_graph_literal("K=2\nedge 1 1\nedge 1 2\n").is_err());
        assert!(matches!(
            parse_graph_literal("K=2\nbandit\nedge 1 3\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(parse_graph_literal("K=2\nbandit 0.5\nedge 1 2\n").is_err());
        assert!(parse_graph_literal("").is_err());
        assert!(parse_graph_literal("K=2\nstar\n").is_err());
    }
}
