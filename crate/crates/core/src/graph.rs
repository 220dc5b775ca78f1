//! Labeled weighted graphs: representation, parsing, validation.
//!
//! Graphs are finite, undirected, with strictly positive edge weights and a
//! real label vector per vertex. Vertex ids are opaque strings; all internal
//! computation uses dense indices in document order, so parsing is
//! deterministic. The JSON schema is
//!
//! ```json
//! {"d": 1,
//!  "nodes": [{"id": "a", "label": [0.0]}],
//!  "edges": [{"u": "a", "v": "b", "w": 1.0}]}
//! ```
//!
//! with `w` defaulting to `1.0` when omitted.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed graph document: {0}")]
    Malformed(String),
    #[error("graph has no vertices")]
    Empty,
    #[error("duplicate node id '{id}'")]
    DuplicateNode { id: String },
    #[error("node '{id}': label dimension mismatch: expected {expected}, got {got}")]
    LabelDimension { id: String, expected: usize, got: usize },
    #[error("node '{id}': label entries must be finite")]
    NonFiniteLabel { id: String },
    #[error("edge {index}: nonpositive weight {weight}")]
    NonpositiveWeight { index: usize, weight: f64 },
    #[error("edge {index}: unknown endpoint '{id}'")]
    UnknownEndpoint { index: usize, id: String },
    #[error("edge {index}: duplicate unordered pair ({u}, {v})")]
    DuplicateEdge { index: usize, u: String, v: String },
    #[error("permutation is not a bijection on the vertex ids: {0}")]
    BadPermutation(String),
}

/// An undirected edge between dense vertex indices, stored once with
/// `u <= v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// A finite undirected graph with positive edge weights and a label vector
/// per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    vertices: Vec<String>,
    index: HashMap<String, usize>,
    labels: Array2<f64>,
    edges: Vec<Edge>,
    dim: usize,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    label: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    u: String,
    v: String,
    #[serde(default = "default_weight")]
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    d: usize,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

/// Sum of a slice in value order, independent of input order.
///
/// Sorting before accumulating makes the float result a function of the
/// multiset of summands, so degrees and normalizations are bit-identical
/// across graph permutations.
pub(crate) fn canonical_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum()
}

impl LabeledGraph {
    /// Builds a validated graph from id/label/edge lists. Edge endpoints are
    /// vertex ids; weights must be positive and finite.
    pub fn new(
        nodes: Vec<(String, Vec<f64>)>,
        edges: Vec<(String, String, f64)>,
        dim: usize,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        if dim == 0 {
            return Err(GraphError::Malformed("label dimension d must be at least 1".into()));
        }
        let mut vertices = Vec::with_capacity(nodes.len());
        let mut index = HashMap::with_capacity(nodes.len());
        let mut labels = Array2::zeros((nodes.len(), dim));
        for (i, (id, label)) in nodes.into_iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode { id });
            }
            if label.len() != dim {
                return Err(GraphError::LabelDimension { id, expected: dim, got: label.len() });
            }
            if label.iter().any(|x| !x.is_finite()) {
                return Err(GraphError::NonFiniteLabel { id });
            }
            for (j, x) in label.iter().enumerate() {
                labels[[i, j]] = *x;
            }
            vertices.push(id);
        }

        let mut seen = HashMap::new();
        let mut dense_edges = Vec::with_capacity(edges.len());
        for (k, (u, v, w)) in edges.into_iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::NonpositiveWeight { index: k, weight: w });
            }
            let ui = *index.get(&u).ok_or(GraphError::UnknownEndpoint { index: k, id: u.clone() })?;
            let vi = *index.get(&v).ok_or(GraphError::UnknownEndpoint { index: k, id: v.clone() })?;
            let key = (ui.min(vi), ui.max(vi));
            if seen.insert(key, k).is_some() {
                return Err(GraphError::DuplicateEdge { index: k, u, v });
            }
            dense_edges.push(Edge { u: key.0, v: key.1, weight: w });
        }
        dense_edges.sort_by_key(|e| (e.u, e.v));

        Ok(Self { vertices, index, labels, edges: dense_edges, dim })
    }

    /// Parses and validates a JSON graph document.
    pub fn parse(bytes: &[u8]) -> Result<Self, GraphError> {
        let doc: GraphDoc =
            serde_json::from_slice(bytes).map_err(|e| GraphError::Malformed(e.to_string()))?;
        Self::new(
            doc.nodes.into_iter().map(|n| (n.id, n.label)).collect(),
            doc.edges
                .into_iter()
                .map(|e| (e.u, e.v, e.w))
                .collect(),
            doc.d,
        )
    }

    /// Serializes to the JSON document format. `parse(serialize(g)) == g`
    /// with bit-exact field values.
    pub fn to_json(&self) -> String {
        let doc = GraphDoc {
            d: self.dim,
            nodes: self
                .vertices
                .iter()
                .enumerate()
                .map(|(i, id)| NodeDoc { id: id.clone(), label: self.labels.row(i).to_vec() })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    u: self.vertices[e.u].clone(),
                    v: self.vertices[e.v].clone(),
                    w: e.weight,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("graph document serializes")
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertices
    }

    pub fn labels(&self) -> &Array2<f64> {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Array1<f64> {
        self.labels.row(v).to_owned()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v` with edge weights. A self-loop lists `v` itself.
    pub fn neighbors(&self, v: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for e in &self.edges {
            if e.u == v && e.v == v {
                out.push((v, e.weight));
            } else if e.u == v {
                out.push((e.v, e.weight));
            } else if e.v == v {
                out.push((e.u, e.weight));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Weighted degree: the sum of incident edge weights, with self-loops
    /// counted once. Summed in canonical (sorted) order so the value is
    /// permutation-invariant.
    pub fn degree(&self, v: usize) -> f64 {
        let ws: Vec<f64> = self.neighbors(v).iter().map(|(_, w)| *w).collect();
        canonical_sum(&ws)
    }

    /// Degree with isolated vertices assigned mass 1 instead of 0.
    pub fn modified_degree(&self, v: usize) -> f64 {
        let d = self.degree(v);
        if d > 0.0 {
            d
        } else {
            1.0
        }
    }

    /// Transports labels and edges along a bijection of the vertex ids.
    /// The vertex list (ids and their order) is unchanged; vertex `sigma(v)`
    /// receives `v`'s label and incident edges.
    pub fn permute(&self, sigma: &HashMap<String, String>) -> Result<Self, GraphError> {
        if sigma.len() != self.vertices.len() {
            return Err(GraphError::BadPermutation(format!(
                "expected {} entries, got {}",
                self.vertices.len(),
                sigma.len()
            )));
        }
        // dense index map: image[i] = index of sigma(vertices[i])
        let mut image = vec![usize::MAX; self.n()];
        let mut hit = vec![false; self.n()];
        for (from, to) in sigma {
            let i = *self
                .index
                .get(from)
                .ok_or_else(|| GraphError::BadPermutation(format!("unknown vertex '{from}'")))?;
            let j = *self
                .index
                .get(to)
                .ok_or_else(|| GraphError::BadPermutation(format!("'{to}' is not a vertex")))?;
            if hit[j] {
                return Err(GraphError::BadPermutation(format!("'{to}' is hit twice")));
            }
            image[i] = j;
            hit[j] = true;
        }

        let mut nodes: Vec<(String, Vec<f64>)> =
            self.vertices.iter().map(|id| (id.clone(), Vec::new())).collect();
        for i in 0..self.n() {
            nodes[image[i]].1 = self.labels.row(i).to_vec();
        }
        let edges = self
            .edges
            .iter()
            .map(|e| {
                (self.vertices[image[e.u]].clone(), self.vertices[image[e.v]].clone(), e.weight)
            })
            .collect();
        Self::new(nodes, edges, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P2: &str = r#"{"d":1,"nodes":[{"id":"a","label":[0.0]},{"id":"b","label":[1.0]}],
                         "edges":[{"u":"a","v":"b","w":1.0}]}"#;

    #[test]
    fn minimal_instance() {
        let g = LabeledGraph::parse(br#"{"d":1,"nodes":[{"id":"a","label":[0.0]}],"edges":[]}"#)
            .unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.dim(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn p2_transcription() {
        let g = LabeledGraph::parse(P2.as_bytes()).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.label(0).to_vec(), vec![0.0]);
        assert_eq!(g.label(1).to_vec(), vec![1.0]);
        assert_eq!(g.edges(), &[Edge { u: 0, v: 1, weight: 1.0 }]);
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let doc = r#"{"d":1,"nodes":[{"id":"a","label":[0.0]},{"id":"b","label":[1.0]}],
                      "edges":[{"u":"a","v":"b","w":-1.0}]}"#;
        let err = LabeledGraph::parse(doc.as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::NonpositiveWeight { index: 0, .. }), "{err}");
    }

    #[test]
    fn unknown_endpoint_reported_with_location() {
        let doc = r#"{"d":1,"nodes":[{"id":"a","label":[0.0]}],
                      "edges":[{"u":"a","v":"zzz"}]}"#;
        let err = LabeledGraph::parse(doc.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "edge 0: unknown endpoint 'zzz'");
    }

    #[test]
    fn duplicate_unordered_edge_rejected() {
        let doc = r#"{"d":1,"nodes":[{"id":"a","label":[0.0]},{"id":"b","label":[1.0]}],
                      "edges":[{"u":"a","v":"b"},{"u":"b","v":"a","w":2.0}]}"#;
        let err = LabeledGraph::parse(doc.as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdge { index: 1, .. }), "{err}");
    }

    #[test]
    fn label_dimension_mismatch_rejected() {
        let doc = r#"{"d":2,"nodes":[{"id":"a","label":[0.0]}],"edges":[]}"#;
        let err = LabeledGraph::parse(doc.as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::LabelDimension { expected: 2, got: 1, .. }), "{err}");
    }

    #[test]
    fn default_weight_is_one() {
        let doc = r#"{"d":1,"nodes":[{"id":"a","label":[0.0]},{"id":"b","label":[1.0]}],
                      "edges":[{"u":"a","v":"b"}]}"#;
        let g = LabeledGraph::parse(doc.as_bytes()).unwrap();
        assert_eq!(g.edges()[0].weight, 1.0);
    }

    #[test]
    fn self_loop_counts_once_in_degree() {
        let doc = r#"{"d":1,"nodes":[{"id":"a","label":[0.0]}],
                      "edges":[{"u":"a","v":"a","w":2.5}]}"#;
        let g = LabeledGraph::parse(doc.as_bytes()).unwrap();
        assert_eq!(g.degree(0), 2.5);
        assert_eq!(g.neighbors(0), vec![(0, 2.5)]);
    }

    #[test]
    fn round_trip_is_identity() {
        let doc = r#"{"d":2,
            "nodes":[{"id":"a","label":[0.125,-3.0]},{"id":"b","label":[1.0,0.3]},
                     {"id":"c","label":[2.0,2.0]}],
            "edges":[{"u":"a","v":"b","w":0.1},{"u":"c","v":"a","w":7.25},{"u":"c","v":"c"}]}"#;
        let g = LabeledGraph::parse(doc.as_bytes()).unwrap();
        let g2 = LabeledGraph::parse(g.to_json().as_bytes()).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn permute_identity_and_inverse() {
        let g = LabeledGraph::parse(P2.as_bytes()).unwrap();
        let id: HashMap<_, _> =
            [("a", "a"), ("b", "b")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(g.permute(&id).unwrap(), g);

        let swap: HashMap<_, _> =
            [("a", "b"), ("b", "a")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let h = g.permute(&swap).unwrap();
        assert_eq!(h.label(0).to_vec(), vec![1.0]);
        assert_eq!(h.label(1).to_vec(), vec![0.0]);
        assert_eq!(h.permute(&swap).unwrap(), g);
    }

    #[test]
    fn permute_preserves_multisets() {
        let doc = r#"{"d":1,
            "nodes":[{"id":"a","label":[0.0]},{"id":"b","label":[1.0]},{"id":"c","label":[2.0]}],
            "edges":[{"u":"a","v":"b","w":0.5},{"u":"b","v":"c","w":1.5}]}"#;
        let g = LabeledGraph::parse(doc.as_bytes()).unwrap();
        let rot: HashMap<_, _> =
            [("a", "b"), ("b", "c"), ("c", "a")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let h = g.permute(&rot).unwrap();
        let mut lg: Vec<f64> = (0..3).map(|i| g.label(i)[0]).collect();
        let mut lh: Vec<f64> = (0..3).map(|i| h.label(i)[0]).collect();
        lg.sort_by(f64::total_cmp);
        lh.sort_by(f64::total_cmp);
        assert_eq!(lg, lh);
        let mut wg: Vec<f64> = g.edges().iter().map(|e| e.weight).collect();
        let mut wh: Vec<f64> = h.edges().iter().map(|e| e.weight).collect();
        wg.sort_by(f64::total_cmp);
        wh.sort_by(f64::total_cmp);
        assert_eq!(wg, wh);
    }

    #[test]
    fn non_bijection_rejected() {
        let g = LabeledGraph::parse(P2.as_bytes()).unwrap();
        let bad: HashMap<_, _> =
            [("a", "b"), ("b", "b")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert!(matches!(g.permute(&bad), Err(GraphError::BadPermutation(_))));
    }
}
