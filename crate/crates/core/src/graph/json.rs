//! Graph JSON schema:
//!
//! ```json
//! { "n": 2, "d": 2,
//!   "features": [[1.0, 0.0], [0.0, 1.0]],
//!   "edges": [{"src": 0, "dst": 1, "rel": "causes", "feat": [1.0]}],
//!   "labels": ["A", "B"],
//!   "undirected": true }
//! ```
//!
//! `labels` may be omitted. Reads validate `n`/`d` against the feature
//! matrix and reject out-of-range endpoints and non-finite values. Writes
//! use full-precision `f64` so a round trip is bit-exact.

use serde::{Deserialize, Serialize};

use super::{AttributedGraph, Edge};
use crate::numerics::Matrix;
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    n: usize,
    d: usize,
    features: Matrix,
    edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    undirected: bool,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    src: usize,
    dst: usize,
    rel: String,
    feat: Vec<f64>,
}

pub fn read_graph_json(text: &str) -> Result<AttributedGraph> {
    let doc: GraphDoc =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.features.rows() != doc.n || doc.features.cols() != doc.d {
        return Err(Error::Parse(format!(
            "declared {}x{} but features are {}x{}",
            doc.n,
            doc.d,
            doc.features.rows(),
            doc.features.cols()
        )));
    }
    if doc.n == 0 && !doc.edges.is_empty() {
        return Err(Error::Parse("edges present with empty node list".to_string()));
    }
    let edges = doc
        .edges
        .into_iter()
        .map(|e| Edge {
            src: e.src,
            dst: e.dst,
            rel: e.rel,
            feat: e.feat,
        })
        .collect();
    AttributedGraph::new(doc.features, edges, doc.labels, doc.undirected)
        .map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_graph_json(g: &AttributedGraph) -> String {
    let doc = GraphDoc {
        n: g.node_count(),
        d: g.feature_dim(),
        features: g.node_features().clone(),
        edges: g
            .edges()
            .iter()
            .map(|e| EdgeDoc {
                src: e.src,
                dst: e.dst,
                rel: e.rel.clone(),
                feat: e.feat.clone(),
            })
            .collect(),
        labels: g.node_labels().map(|ls| ls.to_vec()),
        undirected: g.is_undirected(),
    };
    serde_json::to_string(&doc).expect("graph serialization cannot fail")
}
