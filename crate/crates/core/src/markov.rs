//! Labeled measure Markov chains and the graph-induced constructions.
//!
//! An [`Lmmc`] is a finite state set with a row-stochastic transition
//! kernel, a probability vector, a label vector per state, and a ground
//! metric on labels. Two constructions turn a labeled weighted graph into a
//! chain:
//!
//! * [`induce_q_damped`] — self-probability `q`, remaining mass spread over
//!   neighbors proportionally to edge weight; the modified-degree measure
//!   is stationary for it.
//! * [`induce_eps_normalized`] — the ε-normalized variant with
//!   `deg(v) + 1 + ε` in the denominator; the `deg^ε` measure is
//!   stationary.
//!
//! Validation is strict: rows that do not sum to 1 within `1e-12` fail
//! construction instead of being silently renormalized, since every
//! downstream linear program assumes exact marginals. The equipped measure
//! is allowed to be non-stationary (the depth-k distance is well defined
//! without stationarity); [`check_stationary`] reports the gap so callers
//! can warn.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LabeledGraph;
use crate::metric::{LabelMetric, MetricKind};

/// Row-sum / measure-sum validation tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Default cap on the number of stored path weights.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("kernel must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("kernel row {row} sums to {sum}, expected 1 within {STOCHASTIC_TOL:e}")]
    RowSum { row: usize, sum: f64 },
    #[error("kernel entry ({row},{col}) is negative: {value}")]
    NegativeKernel { row: usize, col: usize, value: f64 },
    #[error("mu sums to {sum}, expected 1 within {STOCHASTIC_TOL:e}")]
    MuSum { sum: f64 },
    #[error("mu entry {index} is negative: {value}")]
    NegativeMu { index: usize, value: f64 },
    #[error("label table has {rows} rows for {states} states")]
    LabelRows { rows: usize, states: usize },
    #[error("label dimension {got} does not match metric dimension {expected}")]
    LabelDimension { expected: usize, got: usize },
    #[error("q must lie strictly between 0 and 1, got {0}")]
    QOutOfRange(f64),
    #[error("epsilon must be nonnegative and finite, got {0}")]
    EpsOutOfRange(f64),
    #[error("labels not injective: states {a} and {b} share a label")]
    LabelsNotInjective { a: usize, b: usize },
    #[error("path support would exceed the cap of {cap} entries")]
    PathCapExceeded { cap: usize },
    #[error("chain has no states")]
    Empty,
    #[error(transparent)]
    Metric(#[from] crate::metric::MetricError),
}

/// A finite labeled measure Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Lmmc {
    kernel: Array2<f64>,
    mu: Array1<f64>,
    labels: Array2<f64>,
    metric: LabelMetric,
}

impl Lmmc {
    pub fn new(
        kernel: Array2<f64>,
        mu: Array1<f64>,
        labels: Array2<f64>,
        metric: LabelMetric,
    ) -> Result<Self, MarkovError> {
        let (n, m) = kernel.dim();
        if n != m {
            return Err(MarkovError::NotSquare { rows: n, cols: m });
        }
        if n == 0 {
            return Err(MarkovError::Empty);
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let x = kernel[[i, j]];
                if x < 0.0 {
                    return Err(MarkovError::NegativeKernel { row: i, col: j, value: x });
                }
                sum += x;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MarkovError::RowSum { row: i, sum });
            }
        }
        if mu.len() != n {
            return Err(MarkovError::LabelRows { rows: mu.len(), states: n });
        }
        let mut sum = 0.0;
        for (i, &x) in mu.iter().enumerate() {
            if x < 0.0 {
                return Err(MarkovError::NegativeMu { index: i, value: x });
            }
            sum += x;
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MarkovError::MuSum { sum });
        }
        if labels.nrows() != n {
            return Err(MarkovError::LabelRows { rows: labels.nrows(), states: n });
        }
        if labels.ncols() != metric.dim() {
            return Err(MarkovError::LabelDimension {
                expected: metric.dim(),
                got: labels.ncols(),
            });
        }
        Ok(Self { kernel, mu, labels, metric })
    }

    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn dim(&self) -> usize {
        self.labels.ncols()
    }

    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    pub fn kernel_row(&self, x: usize) -> ArrayView1<'_, f64> {
        self.kernel.row(x)
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn labels(&self) -> &Array2<f64> {
        &self.labels
    }

    pub fn label(&self, x: usize) -> ArrayView1<'_, f64> {
        self.labels.row(x)
    }

    pub fn metric(&self) -> LabelMetric {
        self.metric
    }

    /// `‖muᵀ·kernel − muᵀ‖_∞`.
    pub fn stationarity_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for j in 0..self.n() {
            let mut acc = 0.0;
            for i in 0..self.n() {
                acc += self.mu[i] * self.kernel[[i, j]];
            }
            gap = gap.max((acc - self.mu[j]).abs());
        }
        gap
    }

    /// Pairwise label distances: entry `(x, y)` is the ground distance
    /// between the label of state `x` here and state `y` in `other`.
    pub fn label_cost_table(&self, other: &Lmmc) -> Result<Array2<f64>, MarkovError> {
        if self.metric != other.metric {
            return Err(MarkovError::LabelDimension {
                expected: self.metric.dim(),
                got: other.metric.dim(),
            });
        }
        let mut table = Array2::zeros((self.n(), other.n()));
        for x in 0..self.n() {
            let lx = self.label(x);
            for y in 0..other.n() {
                table[[x, y]] = self
                    .metric
                    .distance(lx.as_slice().unwrap(), other.label(y).as_slice().unwrap())?;
            }
        }
        Ok(table)
    }

    /// The distribution of the chain at time `k`: `muᵀ·kernel^k`.
    pub fn time_marginal(&self, k: usize) -> Array1<f64> {
        let mut v = self.mu.clone();
        for _ in 0..k {
            let mut next = Array1::zeros(self.n());
            for j in 0..self.n() {
                let mut acc = 0.0;
                for i in 0..self.n() {
                    acc += v[i] * self.kernel[[i, j]];
                }
                next[j] = acc;
            }
            v = next;
        }
        v
    }
}

/// True iff `mu` is stationary for the kernel within `tol`.
pub fn check_stationary(c: &Lmmc, tol: f64) -> bool {
    c.stationarity_gap() <= tol
}

/// The q-damped chain of a labeled graph: each vertex keeps probability `q`
/// and spreads `1 − q` over its weighted neighbors; isolated vertices get a
/// point mass on themselves. The equipped measure is proportional to the
/// modified degree (degree, or 1 for isolated vertices) and is stationary.
pub fn induce_q_damped(
    g: &LabeledGraph,
    q: f64,
    metric: MetricKind,
) -> Result<Lmmc, MarkovError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(MarkovError::QOutOfRange(q));
    }
    let n = g.n();
    let mut kernel = Array2::zeros((n, n));
    for v in 0..n {
        let deg = g.degree(v);
        if deg > 0.0 {
            kernel[[v, v]] = q;
            for (u, w) in g.neighbors(v) {
                kernel[[v, u]] += (1.0 - q) * w / deg;
            }
        } else {
            kernel[[v, v]] = 1.0;
        }
    }
    let mu = modified_degree_measure(g);
    Lmmc::new(kernel, mu, g.labels().clone(), LabelMetric::new(metric, g.dim())?)
}

fn modified_degree_measure(g: &LabeledGraph) -> Array1<f64> {
    let degs: Vec<f64> = (0..g.n()).map(|v| g.modified_degree(v)).collect();
    let total = crate::graph::canonical_sum(&degs);
    Array1::from_iter(degs.iter().map(|d| d / total))
}

/// The ε-normalized chain: row `v` is
/// `((1+ε)·δ_v + Σ w_{vv'}·δ_{v'}) / (deg(v)+1+ε)`; the equipped measure is
/// proportional to `deg^ε(v) = deg(v)+1+ε` and is stationary.
pub fn induce_eps_normalized(
    g: &LabeledGraph,
    eps: f64,
    metric: MetricKind,
) -> Result<Lmmc, MarkovError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(MarkovError::EpsOutOfRange(eps));
    }
    let n = g.n();
    let mut kernel = Array2::zeros((n, n));
    let mut degs_eps = Vec::with_capacity(n);
    for v in 0..n {
        let deg = g.degree(v);
        let denom = deg + 1.0 + eps;
        kernel[[v, v]] = (1.0 + eps) / denom;
        for (u, w) in g.neighbors(v) {
            kernel[[v, u]] += w / denom;
        }
        degs_eps.push(denom);
    }
    let total = crate::graph::canonical_sum(&degs_eps);
    let mu = Array1::from_iter(degs_eps.iter().map(|d| d / total));
    Lmmc::new(kernel, mu, g.labels().clone(), LabelMetric::new(metric, g.dim())?)
}

/// The law of the first `k+1` steps of a chain, stored sparsely: the weight
/// of `(x_0, …, x_k)` is `mu(x_0)·Π m_{x_i}(x_{i+1})`; zero-weight paths
/// are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDistribution {
    horizon: usize,
    weights: BTreeMap<Vec<usize>, f64>,
}

impl PathDistribution {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn weights(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.weights
    }

    pub fn weight(&self, path: &[usize]) -> f64 {
        self.weights.get(path).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Marginal of the coordinate-`i` state.
    pub fn coordinate_marginal(&self, i: usize, n: usize) -> Array1<f64> {
        let mut out = Array1::zeros(n);
        for (path, w) in &self.weights {
            out[path[i]] += w;
        }
        out
    }
}

/// Enumerates the support of the horizon-`k` path law. Fails if the support
/// would exceed `cap` entries.
pub fn path_distribution_capped(
    c: &Lmmc,
    k: usize,
    cap: usize,
) -> Result<PathDistribution, MarkovError> {
    let mut weights = BTreeMap::new();
    let mut stack: Vec<(Vec<usize>, f64)> = (0..c.n())
        .filter(|&x| c.mu()[x] > 0.0)
        .map(|x| (vec![x], c.mu()[x]))
        .collect();
    while let Some((path, w)) = stack.pop() {
        if path.len() == k + 1 {
            if weights.len() >= cap {
                return Err(MarkovError::PathCapExceeded { cap });
            }
            weights.insert(path, w);
            continue;
        }
        let last = *path.last().expect("paths are nonempty");
        for next in 0..c.n() {
            let p = c.kernel()[[last, next]];
            if p > 0.0 {
                let mut ext = path.clone();
                ext.push(next);
                stack.push((ext, w * p));
            }
        }
    }
    Ok(PathDistribution { horizon: k, weights })
}

/// [`path_distribution_capped`] with the default cap.
pub fn path_distribution(c: &Lmmc, k: usize) -> Result<PathDistribution, MarkovError> {
    path_distribution_capped(c, k, DEFAULT_PATH_CAP)
}

/// Pushes a chain forward along its own label map, which must be injective:
/// states become the distinct label points, the kernel and measure carry
/// over, and each state's label is itself.
pub fn label_space_chain(c: &Lmmc) -> Result<Lmmc, MarkovError> {
    for a in 0..c.n() {
        for b in (a + 1)..c.n() {
            if c.label(a) == c.label(b) {
                return Err(MarkovError::LabelsNotInjective { a, b });
            }
        }
    }
    // With an injective label map the pushforward is a pure renaming: the
    // dense indices stay, the labels are now read as points of the label
    // space itself.
    Lmmc::new(c.kernel().clone(), c.mu().clone(), c.labels().clone(), c.metric())
}

/// JSON document for a chain, used by the CLI `convert` subcommand.
#[derive(Serialize, Deserialize)]
pub struct LmmcDoc {
    pub n: usize,
    pub d: usize,
    pub metric: MetricKind,
    /// Row-major `n×n` kernel.
    pub kernel: Vec<f64>,
    pub mu: Vec<f64>,
    /// Row-major `n×d` label table.
    pub labels: Vec<f64>,
}

impl LmmcDoc {
    pub fn from_chain(c: &Lmmc) -> Self {
        Self {
            n: c.n(),
            d: c.dim(),
            metric: c.metric().kind(),
            kernel: c.kernel().iter().cloned().collect(),
            mu: c.mu().to_vec(),
            labels: c.labels().iter().cloned().collect(),
        }
    }

    pub fn into_chain(self) -> Result<Lmmc, MarkovError> {
        let kernel = Array2::from_shape_vec((self.n, self.n), self.kernel)
            .map_err(|_| MarkovError::NotSquare { rows: self.n, cols: self.n })?;
        let labels = Array2::from_shape_vec((self.n, self.d), self.labels)
            .map_err(|_| MarkovError::LabelRows { rows: 0, states: self.n })?;
        Lmmc::new(kernel, Array1::from(self.mu), labels, LabelMetric::new(self.metric, self.d)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};

    fn p2() -> LabeledGraph {
        LabeledGraph::new(
            vec![("a".into(), vec![0.0]), ("b".into(), vec![1.0])],
            vec![("a".into(), "b".into(), 1.0)],
            1,
        )
        .unwrap()
    }

    fn triangle() -> LabeledGraph {
        LabeledGraph::new(
            vec![
                ("a".into(), vec![0.0]),
                ("b".into(), vec![1.0]),
                ("c".into(), vec![2.0]),
            ],
            vec![
                ("a".into(), "b".into(), 1.0),
                ("b".into(), "c".into(), 1.0),
                ("a".into(), "c".into(), 1.0),
            ],
            1,
        )
        .unwrap()
    }

    fn isolated() -> LabeledGraph {
        LabeledGraph::new(vec![("a".into(), vec![3.0])], vec![], 1).unwrap()
    }

    #[test]
    fn q_damped_p2() {
        let c = induce_q_damped(&p2(), 0.5, MetricKind::L1).unwrap();
        assert_eq!(c.kernel(), &arr2(&[[0.5, 0.5], [0.5, 0.5]]));
        assert_eq!(c.mu(), &arr1(&[0.5, 0.5]));
        assert!(check_stationary(&c, 1e-12));
    }

    #[test]
    fn q_damped_isolated_vertex() {
        let c = induce_q_damped(&isolated(), 0.5, MetricKind::L1).unwrap();
        assert_eq!(c.kernel(), &arr2(&[[1.0]]));
        assert_eq!(c.mu(), &arr1(&[1.0]));
    }

    #[test]
    fn q_damped_triangle() {
        let c = induce_q_damped(&triangle(), 0.3, MetricKind::L1).unwrap();
        for v in 0..3 {
            assert_abs_diff_eq!(c.kernel()[[v, v]], 0.3, epsilon = 1e-15);
            for u in 0..3 {
                if u != v {
                    assert_abs_diff_eq!(c.kernel()[[v, u]], 0.35, epsilon = 1e-15);
                }
            }
            assert_abs_diff_eq!(c.mu()[v], 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn q_out_of_range_rejected() {
        assert!(matches!(
            induce_q_damped(&p2(), 0.0, MetricKind::L1),
            Err(MarkovError::QOutOfRange(_))
        ));
        assert!(matches!(
            induce_q_damped(&p2(), 1.0, MetricKind::L1),
            Err(MarkovError::QOutOfRange(_))
        ));
    }

    #[test]
    fn eps_normalized_examples() {
        let c = induce_eps_normalized(&isolated(), 0.0, MetricKind::L1).unwrap();
        assert_eq!(c.kernel(), &arr2(&[[1.0]]));

        let c = induce_eps_normalized(&p2(), 0.0, MetricKind::L1).unwrap();
        assert_eq!(c.kernel(), &arr2(&[[0.5, 0.5], [0.5, 0.5]]));
        assert_eq!(c.mu(), &arr1(&[0.5, 0.5]));

        let c = induce_eps_normalized(&p2(), 1.0, MetricKind::L1).unwrap();
        assert_abs_diff_eq!(c.kernel()[[0, 0]], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.kernel()[[0, 1]], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.kernel()[[1, 1]], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(c.mu(), &arr1(&[0.5, 0.5]));
        assert!(check_stationary(&c, 1e-12));

        assert!(matches!(
            induce_eps_normalized(&p2(), -0.1, MetricKind::L1),
            Err(MarkovError::EpsOutOfRange(_))
        ));
    }

    #[test]
    fn non_stationary_mu_detected() {
        // Point mass on a symmetric 2-state chain drifts: muT·K = (0.5, 0.5).
        let kernel = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        let mu = arr1(&[1.0, 0.0]);
        let labels = arr2(&[[0.0], [1.0]]);
        let c = Lmmc::new(kernel, mu, labels, LabelMetric::new(MetricKind::L1, 1).unwrap())
            .unwrap();
        assert!(!check_stationary(&c, 1e-12));
        assert_abs_diff_eq!(c.stationarity_gap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn row_sum_validation_fails_loudly() {
        let kernel = arr2(&[[0.6, 0.5], [0.5, 0.5]]);
        let mu = arr1(&[0.5, 0.5]);
        let labels = arr2(&[[0.0], [1.0]]);
        assert!(matches!(
            Lmmc::new(kernel, mu, labels, LabelMetric::new(MetricKind::L1, 1).unwrap()),
            Err(MarkovError::RowSum { row: 0, .. })
        ));
    }

    #[test]
    fn path_distribution_examples() {
        let c = induce_q_damped(&p2(), 0.5, MetricKind::L1).unwrap();
        let p0 = path_distribution(&c, 0).unwrap();
        assert_eq!(p0.weight(&[0]), 0.5);
        assert_eq!(p0.weight(&[1]), 0.5);

        let p1 = path_distribution(&c, 1).unwrap();
        assert_eq!(p1.weights().len(), 4);
        for (_, w) in p1.weights() {
            assert_abs_diff_eq!(*w, 0.25, epsilon = 1e-15);
        }

        let single = induce_q_damped(&isolated(), 0.5, MetricKind::L1).unwrap();
        let p5 = path_distribution(&single, 5).unwrap();
        assert_eq!(p5.weights().len(), 1);
        assert_eq!(p5.weight(&[0, 0, 0, 0, 0, 0]), 1.0);
    }

    #[test]
    fn path_distribution_marginals_match_chain() {
        let c = induce_q_damped(&triangle(), 0.3, MetricKind::L1).unwrap();
        let k = 3;
        let p = path_distribution(&c, k).unwrap();
        assert_abs_diff_eq!(p.total_mass(), 1.0, epsilon = 1e-10);
        let m0 = p.coordinate_marginal(0, c.n());
        for x in 0..c.n() {
            assert_abs_diff_eq!(m0[x], c.mu()[x], epsilon = 1e-10);
        }
        // Transition frequencies reproduce the kernel: the time-(i, i+1)
        // joint equals marginal times kernel row.
        for i in 0..k {
            let mut joint = Array2::<f64>::zeros((c.n(), c.n()));
            for (path, w) in p.weights() {
                joint[[path[i], path[i + 1]]] += w;
            }
            let mi = p.coordinate_marginal(i, c.n());
            for x in 0..c.n() {
                for y in 0..c.n() {
                    assert_abs_diff_eq!(
                        joint[[x, y]],
                        mi[x] * c.kernel()[[x, y]],
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn path_cap_enforced() {
        let c = induce_q_damped(&triangle(), 0.3, MetricKind::L1).unwrap();
        assert!(matches!(
            path_distribution_capped(&c, 4, 10),
            Err(MarkovError::PathCapExceeded { cap: 10 })
        ));
    }

    #[test]
    fn label_space_chain_is_a_renaming() {
        let c = induce_q_damped(&p2(), 0.5, MetricKind::L1).unwrap();
        let z = label_space_chain(&c).unwrap();
        assert_eq!(z.kernel(), c.kernel());
        assert_eq!(z.mu(), c.mu());
        assert_eq!(z.labels(), c.labels());

        let single = induce_q_damped(&isolated(), 0.5, MetricKind::L1).unwrap();
        let z = label_space_chain(&single).unwrap();
        assert_eq!(z.n(), 1);
        assert_eq!(z.kernel()[[0, 0]], 1.0);

        let dup = LabeledGraph::new(
            vec![("a".into(), vec![7.0]), ("b".into(), vec![7.0])],
            vec![("a".into(), "b".into(), 1.0)],
            1,
        )
        .unwrap();
        let c = induce_q_damped(&dup, 0.5, MetricKind::L1).unwrap();
        assert!(matches!(label_space_chain(&c), Err(MarkovError::LabelsNotInjective { .. })));
    }

    #[test]
    fn induction_commutes_with_permutation() {
        use std::collections::HashMap;
        let g = triangle();
        let rot: HashMap<_, _> = [("a", "b"), ("b", "c"), ("c", "a")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let h = g.permute(&rot).unwrap();
        let cg = induce_q_damped(&g, 0.4, MetricKind::L1).unwrap();
        let ch = induce_q_damped(&h, 0.4, MetricKind::L1).unwrap();
        // dense index of the image of vertex i is (i + 1) % 3
        for i in 0..3 {
            let pi = (i + 1) % 3;
            assert_eq!(cg.mu()[i], ch.mu()[pi]);
            assert_eq!(cg.label(i), ch.label(pi));
            for j in 0..3 {
                let pj = (j + 1) % 3;
                assert_eq!(cg.kernel()[[i, j]], ch.kernel()[[pi, pj]]);
            }
        }
    }

    #[test]
    fn doc_round_trip() {
        let c = induce_q_damped(&triangle(), 0.3, MetricKind::L1).unwrap();
        let doc = LmmcDoc::from_chain(&c);
        let json = serde_json::to_string(&doc).unwrap();
        let back: LmmcDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_chain().unwrap(), c);
    }
}
