//! Weisfeiler-Lehman distances between labeled weighted graphs.
//!
//! The crate computes the depth-`k` WL distance between two labeled measure
//! Markov chains by a backward optimal-transport recursion on cost-to-go
//! tables, and cross-checks the value against three independent
//! formulations: the hierarchical nested-label construction, an explicit
//! bicausal linear program on paired path space, and compositions of
//! Markovian couplings. On top of the distance it provides audit harnesses
//! for the Lipschitz and discriminative-power properties of a family of
//! message-passing graph networks.
//!
//! Module map:
//!
//! * [`graph`] — labeled weighted graphs, parsing, validation, permutation.
//! * [`metric`] — ground metrics on label vectors (L1 / L2 / L∞).
//! * [`markov`] — labeled measure Markov chains and the graph-induced
//!   constructions (q-damped and ε-normalized kernels).
//! * [`transport`] — exact discrete optimal transport (transportation
//!   simplex) and a dense equality-form LP solver with Bland's rule.
//! * [`wl`] — the WL distance: backward cost-to-go recursion, hierarchical
//!   nested-label route, and classic color refinement.
//! * [`coupling`] — oracle machinery: Markovian-coupling composition,
//!   bicausality checks, the path-space bicausal LP, full-history value
//!   tables, and the label-space reduction.
//! * [`gnn`] — message-passing GNN forward passes, the measure-chain layer
//!   algebra they restrict, and Lipschitz / zero-set audits.

pub mod coupling;
pub mod gnn;
pub mod graph;
pub mod markov;
pub mod metric;
pub mod transport;
pub mod wl;

pub use graph::LabeledGraph;
pub use markov::Lmmc;
pub use metric::{LabelMetric, MetricKind};
pub use transport::Coupling;
