//! Attributed graph data model: typed edges with feature rows, optional node
//! labels, permutation tooling, canonical textualization, and the symmetric
//! normalized adjacency used by the convolutional encoders.

mod json;
mod synthetic;

pub use json::{read_graph_json, write_graph_json};
pub use synthetic::{
    dataset_from_jsonl, dataset_to_jsonl, generate_dataset, DatasetExample, SignalTags,
    SyntheticTaskSpec,
};

use crate::numerics::Matrix;
use crate::{Error, Result};

/// One typed, feature-carrying edge. For undirected graphs the canonical
/// orientation is `src <= dst`.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub rel: String,
    pub feat: Vec<f64>,
}

/// Node-attributed graph; the unit every stage of the pipeline consumes.
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    node_features: Matrix,
    edges: Vec<Edge>,
    node_labels: Option<Vec<String>>,
    undirected: bool,
}

impl AttributedGraph {
    /// Validates endpoints, feature widths, and label count, and
    /// canonicalizes undirected edges (`src <= dst`, exact duplicates
    /// dropped).
    pub fn new(
        node_features: Matrix,
        mut edges: Vec<Edge>,
        node_labels: Option<Vec<String>>,
        undirected: bool,
    ) -> Result<Self> {
        let n = node_features.rows();
        let edge_width = edges.first().map(|e| e.feat.len());
        for (i, e) in edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(Error::Invalid(format!(
                    "edge {i} ({} -> {}) out of range for {n} nodes",
                    e.src, e.dst
                )));
            }
            if e.feat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("edge {i} has non-finite feature")));
            }
            if Some(e.feat.len()) != edge_width {
                return Err(Error::Dimension(format!(
                    "edge {i} feature width {} differs from {}",
                    e.feat.len(),
                    edge_width.unwrap_or(0)
                )));
            }
        }
        if let Some(labels) = &node_labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        if undirected {
            for e in edges.iter_mut() {
                if e.src > e.dst {
                    std::mem::swap(&mut e.src, &mut e.dst);
                }
            }
            let mut seen: Vec<&Edge> = Vec::new();
            let mut keep = vec![true; edges.len()];
            for (i, e) in edges.iter().enumerate() {
                if seen.iter().any(|s| **s == *e) {
                    keep[i] = false;
                } else {
                    seen.push(e);
                }
            }
            let mut it = keep.iter();
            edges.retain(|_| *it.next().unwrap());
        }
        Ok(Self {
            node_features,
            edges,
            node_labels,
            undirected,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn node_features(&self) -> &Matrix {
        &self.node_features
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_labels(&self) -> Option<&[String]> {
        self.node_labels.as_deref()
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    /// Binary dense adjacency (symmetrized when undirected). Multi-edges
    /// collapse to a single 1.
    pub fn adjacency(&self) -> Matrix {
        let n = self.node_count();
        let mut a = Matrix::zeros(n, n);
        for e in &self.edges {
            a[(e.src, e.dst)] = 1.0;
            if self.undirected {
                a[(e.dst, e.src)] = 1.0;
            }
        }
        a
    }
}

/// A bijection on node indices.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationMap {
    perm: Vec<usize>,
}

impl PermutationMap {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(Error::Invalid(format!("not a bijection on 0..{n}")));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn random(n: usize, rng: &mut crate::numerics::DeterministicRng) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        Self { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Image of node `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.perm[i]
    }

    pub fn inverse(&self) -> PermutationMap {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        Self { perm: inv }
    }

    /// Permutation matrix P with `P[p(i), i] = 1`, so `P * X` moves row `i`
    /// of `X` to row `p(i)`.
    pub fn matrix(&self) -> Matrix {
        let n = self.perm.len();
        let mut p = Matrix::zeros(n, n);
        for (i, &pi) in self.perm.iter().enumerate() {
            p[(pi, i)] = 1.0;
        }
        p
    }
}

/// Relabels node `i` as `p(i)`, moving features, labels, and edges
/// consistently.
pub fn permute(g: &AttributedGraph, p: &PermutationMap) -> Result<AttributedGraph> {
    let n = g.node_count();
    if p.len() != n {
        return Err(Error::Dimension(format!(
            "permutation over {} elements for {n} nodes",
            p.len()
        )));
    }
    let mut features = Matrix::zeros(n, g.feature_dim());
    for i in 0..n {
        features.row_mut(p.apply(i)).copy_from_slice(g.node_features.row(i));
    }
    let edges = g
        .edges
        .iter()
        .map(|e| Edge {
            src: p.apply(e.src),
            dst: p.apply(e.dst),
            rel: e.rel.clone(),
            feat: e.feat.clone(),
        })
        .collect();
    let labels = g.node_labels.as_ref().map(|ls| {
        let mut moved = vec![String::new(); n];
        for (i, l) in ls.iter().enumerate() {
            moved[p.apply(i)] = l.clone();
        }
        moved
    });
    AttributedGraph::new(features, edges, labels, g.undirected)
}

/// Symmetric-normalized adjacency with self-loops:
/// `A_hat = D^{-1/2} (A + I) D^{-1/2}` where `D` is the degree matrix of
/// `A + I`. Isolated nodes are covered by the self-loop.
pub fn normalized_adjacency(g: &AttributedGraph) -> Matrix {
    normalize_dense(&g.adjacency())
}

/// [`normalized_adjacency`] over an explicit dense adjacency.
pub fn normalize_dense(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut with_loops = a.clone();
    for i in 0..n {
        with_loops[(i, i)] = 1.0;
    }
    let deg = with_loops.row_sums();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut out = with_loops;
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    out
}

/// Canonical two-section serialization:
///
/// ```text
/// nodes
/// <canonical id>,<label>        (labels sorted lexicographically)
/// edges
/// <src label>,<relation>,<dst label>   (lines sorted lexicographically)
/// ```
///
/// Node ids are positions in the sorted label order, and undirected edge
/// endpoints are ordered by label, so the output is identical for any
/// relabeling of the same graph.
pub fn textualize(g: &AttributedGraph) -> Result<String> {
    let labels = g
        .node_labels()
        .ok_or_else(|| Error::Invalid("textualization requires node labels".to_string()))?;
    let mut sorted: Vec<&String> = labels.iter().collect();
    sorted.sort();
    let mut out = String::from("nodes\n");
    for (id, label) in sorted.iter().enumerate() {
        out.push_str(&format!("{id},{label}\n"));
    }
    out.push_str("edges\n");
    let mut edge_lines: Vec<String> = g
        .edges()
        .iter()
        .map(|e| {
            let (mut a, mut b) = (labels[e.src].as_str(), labels[e.dst].as_str());
            if g.is_undirected() && a > b {
                std::mem::swap(&mut a, &mut b);
            }
            format!("{a},{},{b}\n", e.rel)
        })
        .collect();
    edge_lines.sort();
    for line in edge_lines {
        out.push_str(&line);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DeterministicRng;

    fn two_node_graph() -> AttributedGraph {
        AttributedGraph::new(
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![Edge {
                src: 1,
                dst: 0,
                rel: "causes".to_string(),
                feat: vec![1.0],
            }],
            Some(vec!["A".to_string(), "B".to_string()]),
            true,
        )
        .unwrap()
    }

    #[test]
    fn undirected_edges_canonicalize() {
        let g = two_node_graph();
        assert_eq!(g.edges()[0].src, 0);
        assert_eq!(g.edges()[0].dst, 1);
    }

    #[test]
    fn rejects_out_of_range_edges() {
        let r = AttributedGraph::new(
            Matrix::zeros(2, 1),
            vec![Edge {
                src: 0,
                dst: 2,
                rel: "r".to_string(),
                feat: vec![],
            }],
            None,
            true,
        );
        assert!(r.is_err());
    }

    #[test]
    fn normalized_adjacency_single_node() {
        let g = AttributedGraph::new(Matrix::zeros(1, 1), vec![], None, true).unwrap();
        let a = normalized_adjacency(&g);
        assert_eq!(a[(0, 0)], 1.0);
    }

    #[test]
    fn normalized_adjacency_two_node_edge() {
        // A + I = all-ones, degrees (2, 2), so every entry is 1/2.
        let a = normalized_adjacency(&two_node_graph());
        for v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_adjacency_is_equivariant() {
        let mut rng = DeterministicRng::new(3);
        let n = 7;
        let mut edges = Vec::new();
        for _ in 0..10 {
            edges.push(Edge {
                src: rng.index(n),
                dst: rng.index(n),
                rel: "r".to_string(),
                feat: vec![],
            });
        }
        let g =
            AttributedGraph::new(rng.matrix(n, 3, -1.0, 1.0), edges, None, true).unwrap();
        let p = PermutationMap::random(g.node_count(), &mut rng);
        let pg = permute(&g, &p).unwrap();
        let pm = p.matrix();
        let lhs = normalized_adjacency(&pg);
        let rhs = pm
            .matmul(&normalized_adjacency(&g))
            .unwrap()
            .matmul(&pm.transpose())
            .unwrap();
        assert!(crate::numerics::relative_error(&lhs, &rhs).unwrap() < 1e-12);
    }

    #[test]
    fn permute_round_trips_through_inverse() {
        let g = two_node_graph();
        let p = PermutationMap::new(vec![1, 0]).unwrap();
        let back = permute(&permute(&g, &p).unwrap(), &p.inverse()).unwrap();
        assert_eq!(back, g);
        let id = permute(&g, &PermutationMap::identity(2)).unwrap();
        assert_eq!(id, g);
    }

    #[test]
    fn permutation_map_rejects_non_bijection() {
        assert!(PermutationMap::new(vec![0, 0]).is_err());
        assert!(PermutationMap::new(vec![0, 2]).is_err());
    }

    #[test]
    fn textualize_single_node() {
        let g = AttributedGraph::new(
            Matrix::zeros(1, 1),
            vec![],
            Some(vec!["A".to_string()]),
            true,
        )
        .unwrap();
        assert_eq!(textualize(&g).unwrap(), "nodes\n0,A\nedges\n");
    }

    #[test]
    fn textualize_edge_uses_labels() {
        let text = textualize(&two_node_graph()).unwrap();
        assert_eq!(text, "nodes\n0,A\n1,B\nedges\nA,causes,B\n");
    }

    #[test]
    fn textualize_is_permutation_invariant() {
        let g = two_node_graph();
        let p = PermutationMap::new(vec![1, 0]).unwrap();
        assert_eq!(
            textualize(&g).unwrap(),
            textualize(&permute(&g, &p).unwrap()).unwrap()
        );
    }

    #[test]
    fn textualize_requires_labels() {
        let g = AttributedGraph::new(Matrix::zeros(1, 1), vec![], None, true).unwrap();
        assert!(textualize(&g).is_err());
    }
}
