//! Message-passing GNN forward passes and their measure-chain algebra,
//! plus the audit harnesses for the Lipschitz and zero-set properties.
//!
//! The model family is deliberately narrow: each map `φ_i` is one affine
//! layer followed by an exactly-1-Lipschitz componentwise activation
//! (identity, ReLU or absolute value), so the Lipschitz constant of the
//! whole network is a product of affine operator norms. Under the L1 label
//! metric those norms are exact (max column absolute sum), which makes the
//! audits sharp; L2 bounds are conservative (power iteration inflated by
//! 1%) and flagged as such.
//!
//! Two graph forward passes:
//!
//! * [`mpgnn_forward`] — q-damped message passing with the modified-degree
//!   readout; it coincides with the measure-chain pipeline
//!   ([`mcnn_layer`] / [`mcnn_readout`]) applied to the q-damped chain of
//!   the graph, within float association order.
//! * [`normalized_gin_forward`] — the ε-normalized variant, which
//!   aggregates raw labels before applying `φ` and reads out without a
//!   final `φ`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::LabeledGraph;
use crate::markov::{induce_eps_normalized, induce_q_damped, Lmmc, MarkovError};
use crate::metric::{LabelMetric, MetricKind};
use crate::wl::{wl_distance, WlError};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("layer dimension mismatch: expected input of size {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model must have at least {expected} message layers, got {got}")]
    LayerCount { expected: usize, got: usize },
    #[error("readout must map to a scalar, maps to {0}")]
    ReadoutNotScalar(usize),
    #[error("unknown activation '{0}' (expected identity, relu or abs)")]
    UnknownActivation(String),
    #[error("model variant does not match the forward pass: {0}")]
    VariantMismatch(&'static str),
    #[error("model file must set exactly one of 'q' and 'eps'")]
    AmbiguousVariant,
    #[error("L2 layer bounds are conservative; pass allow_conservative to audit under L2")]
    ConservativeMetric,
    #[error("empty weight matrix")]
    EmptyWeights,
    #[error(transparent)]
    Metric(#[from] crate::metric::MetricError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Wl(#[from] WlError),
}

/// Componentwise 1-Lipschitz activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Abs,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Abs => x.abs(),
        }
    }
}

/// One affine map `x ↦ act(W·x + b)` with `W` stored row-major
/// (`weights[(i, j)]` multiplies input coordinate `j` into output `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    weights: Array2<f64>,
    bias: Array1<f64>,
    activation: Activation,
}

impl AffineLayer {
    pub fn new(
        weights: Array2<f64>,
        bias: Array1<f64>,
        activation: Activation,
    ) -> Result<Self, GnnError> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(GnnError::EmptyWeights);
        }
        if bias.len() != weights.nrows() {
            return Err(GnnError::DimensionMismatch {
                expected: weights.nrows(),
                got: bias.len(),
            });
        }
        Ok(Self { weights, bias, activation })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            weights: Array2::eye(d),
            bias: Array1::zeros(d),
            activation: Activation::Identity,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn apply(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>, GnnError> {
        if x.len() != self.in_dim() {
            return Err(GnnError::DimensionMismatch { expected: self.in_dim(), got: x.len() });
        }
        let mut out = Array1::zeros(self.out_dim());
        for i in 0..self.out_dim() {
            let mut acc = self.bias[i];
            for j in 0..self.in_dim() {
                acc += self.weights[[i, j]] * x[j];
            }
            out[i] = self.activation.apply(acc);
        }
        Ok(out)
    }
}

/// Which graph-to-chain construction the model is built for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GnnVariant {
    /// q-damped message passing; a depth-k model carries message layers
    /// `φ_1..φ_k` plus `φ_{k+1}` feeding the readout `ψ`.
    QDamped { q: f64 },
    /// ε-normalized GIN; a depth-k model carries `φ_1..φ_k` and a bare
    /// `ψ` readout.
    EpsNormalized { eps: f64 },
}

/// A message-passing model: a variant, its layer maps and the scalar
/// readout `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpgnnModel {
    pub variant: GnnVariant,
    pub layers: Vec<AffineLayer>,
    pub readout: AffineLayer,
}

impl MpgnnModel {
    pub fn new(
        variant: GnnVariant,
        layers: Vec<AffineLayer>,
        readout: AffineLayer,
    ) -> Result<Self, GnnError> {
        match variant {
            GnnVariant::QDamped { q } => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(GnnError::Markov(MarkovError::QOutOfRange(q)));
                }
                if layers.is_empty() {
                    return Err(GnnError::LayerCount { expected: 1, got: 0 });
                }
            }
            GnnVariant::EpsNormalized { eps } => {
                if !(eps >= 0.0 && eps.is_finite()) {
                    return Err(GnnError::Markov(MarkovError::EpsOutOfRange(eps)));
                }
            }
        }
        for w in layers.windows(2) {
            if w[1].in_dim() != w[0].out_dim() {
                return Err(GnnError::DimensionMismatch {
                    expected: w[0].out_dim(),
                    got: w[1].in_dim(),
                });
            }
        }
        if let Some(last) = layers.last() {
            if readout.in_dim() != last.out_dim() {
                return Err(GnnError::DimensionMismatch {
                    expected: last.out_dim(),
                    got: readout.in_dim(),
                });
            }
        }
        if readout.out_dim() != 1 {
            return Err(GnnError::ReadoutNotScalar(readout.out_dim()));
        }
        Ok(Self { variant, layers, readout })
    }

    /// Message-passing depth: the q-damped variant carries `k+1` maps
    /// (φ_{k+1} feeds the readout), the ε variant carries `k`.
    pub fn depth(&self) -> usize {
        match self.variant {
            GnnVariant::QDamped { .. } => self.layers.len() - 1,
            GnnVariant::EpsNormalized { .. } => self.layers.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(self.readout.in_dim(), AffineLayer::in_dim)
    }
}

/// One measure-chain layer: relabels every state with the expectation of
/// `φ` under its kernel row, `ℓ'(x) = Σ_{x'} m_x(x')·φ(ℓ(x'))`. Kernel and
/// measure are untouched.
pub fn mcnn_layer(c: &Lmmc, phi: &AffineLayer) -> Result<Lmmc, GnnError> {
    if phi.in_dim() != c.dim() {
        return Err(GnnError::DimensionMismatch { expected: c.dim(), got: phi.in_dim() });
    }
    let n = c.n();
    let mut mapped = Vec::with_capacity(n);
    for x in 0..n {
        mapped.push(phi.apply(&c.label(x))?);
    }
    let mut labels = Array2::zeros((n, phi.out_dim()));
    for x in 0..n {
        for xp in 0..n {
            let p = c.kernel()[[x, xp]];
            if p != 0.0 {
                for j in 0..phi.out_dim() {
                    labels[[x, j]] += p * mapped[xp][j];
                }
            }
        }
    }
    let metric = LabelMetric::new(c.metric().kind(), phi.out_dim())?;
    Ok(Lmmc::new(c.kernel().clone(), c.mu().clone(), labels, metric)?)
}

/// Measure-chain readout: `ψ(Σ_x μ(x)·φ(ℓ(x)))`, a scalar.
pub fn mcnn_readout(c: &Lmmc, phi: &AffineLayer, psi: &AffineLayer) -> Result<f64, GnnError> {
    if phi.in_dim() != c.dim() {
        return Err(GnnError::DimensionMismatch { expected: c.dim(), got: phi.in_dim() });
    }
    if psi.in_dim() != phi.out_dim() {
        return Err(GnnError::DimensionMismatch { expected: phi.out_dim(), got: psi.in_dim() });
    }
    let mut acc = Array1::zeros(phi.out_dim());
    for x in 0..c.n() {
        let v = phi.apply(&c.label(x))?;
        let w = c.mu()[x];
        for j in 0..phi.out_dim() {
            acc[j] += w * v[j];
        }
    }
    Ok(psi.apply(&acc.view())?[0])
}

/// The measure-chain pipeline of a model: message layers then readout.
pub fn mcnn_pipeline(c: &Lmmc, model: &MpgnnModel) -> Result<f64, GnnError> {
    match model.variant {
        GnnVariant::QDamped { .. } => {
            let mut chain = c.clone();
            let k = model.depth();
            for phi in &model.layers[..k] {
                chain = mcnn_layer(&chain, phi)?;
            }
            mcnn_readout(&chain, &model.layers[k], &model.readout)
        }
        GnnVariant::EpsNormalized { .. } => {
            // a GIN layer is φ applied after an identity chain layer
            let mut chain = c.clone();
            for phi in &model.layers {
                let averaged = mcnn_layer(&chain, &AffineLayer::identity(chain.dim()))?;
                let mut labels = Array2::zeros((averaged.n(), phi.out_dim()));
                for x in 0..averaged.n() {
                    labels.row_mut(x).assign(&phi.apply(&averaged.label(x))?);
                }
                let metric = LabelMetric::new(chain.metric().kind(), phi.out_dim())?;
                chain =
                    Lmmc::new(averaged.kernel().clone(), averaged.mu().clone(), labels, metric)?;
            }
            mcnn_readout(&chain, &AffineLayer::identity(chain.dim()), &model.readout)
        }
    }
}

/// Direct evaluation of the q-damped message-passing network on a graph:
///
/// `ℓ^{i+1}(v) = q·φ_{i+1}(ℓ^i(v)) + (1-q)/deg(v) · Σ w_{vv'}·φ_{i+1}(ℓ^i(v'))`
///
/// (isolated vertices use `φ_{i+1}(ℓ^i(v))`), with readout
/// `ψ(Σ_v overline-deg(v)/Σ overline-deg · φ_{k+1}(ℓ^k(v)))`.
pub fn mpgnn_forward(g: &LabeledGraph, model: &MpgnnModel) -> Result<f64, GnnError> {
    let GnnVariant::QDamped { q } = model.variant else {
        return Err(GnnError::VariantMismatch("use normalized_gin_forward for the ε variant"));
    };
    if model.input_dim() != g.dim() {
        return Err(GnnError::DimensionMismatch { expected: g.dim(), got: model.input_dim() });
    }
    let n = g.n();
    let k = model.depth();
    let mut labels: Vec<Array1<f64>> = (0..n).map(|v| g.label(v)).collect();
    for phi in &model.layers[..k] {
        let mapped: Vec<Array1<f64>> =
            labels.iter().map(|l| phi.apply(&l.view())).collect::<Result<_, _>>()?;
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let deg = g.degree(v);
            if deg > 0.0 {
                let mut acc = mapped[v].mapv(|x| q * x);
                let scale = (1.0 - q) / deg;
                for (u, w) in g.neighbors(v) {
                    for j in 0..acc.len() {
                        acc[j] += scale * w * mapped[u][j];
                    }
                }
                next.push(acc);
            } else {
                next.push(mapped[v].clone());
            }
        }
        labels = next;
    }
    let phi_last = &model.layers[k];
    let total: f64 = {
        let degs: Vec<f64> = (0..n).map(|v| g.modified_degree(v)).collect();
        crate::graph::canonical_sum(&degs)
    };
    let mut acc = Array1::zeros(phi_last.out_dim());
    for v in 0..n {
        let mapped = phi_last.apply(&labels[v].view())?;
        let mass = g.modified_degree(v) / total;
        for j in 0..acc.len() {
            acc[j] += mass * mapped[j];
        }
    }
    Ok(model.readout.apply(&acc.view())?[0])
}

/// Direct evaluation of the ε-normalized GIN on a graph:
///
/// `ℓ^{i+1}(v) = φ_{i+1}( ((1+ε)·ℓ^i(v) + Σ w_{vv'}·ℓ^i(v')) / (deg(v)+1+ε) )`
///
/// with readout `ψ(Σ_v deg^ε(v)/Σ deg^ε · ℓ^k(v))`.
pub fn normalized_gin_forward(g: &LabeledGraph, model: &MpgnnModel) -> Result<f64, GnnError> {
    let GnnVariant::EpsNormalized { eps } = model.variant else {
        return Err(GnnError::VariantMismatch("use mpgnn_forward for the q-damped variant"));
    };
    if model.input_dim() != g.dim() {
        return Err(GnnError::DimensionMismatch { expected: g.dim(), got: model.input_dim() });
    }
    let n = g.n();
    let mut labels: Vec<Array1<f64>> = (0..n).map(|v| g.label(v)).collect();
    for phi in &model.layers {
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let deg = g.degree(v);
            let denom = deg + 1.0 + eps;
            let mut agg = labels[v].mapv(|x| (1.0 + eps) * x);
            for (u, w) in g.neighbors(v) {
                for j in 0..agg.len() {
                    agg[j] += w * labels[u][j];
                }
            }
            agg.mapv_inplace(|x| x / denom);
            next.push(phi.apply(&agg.view())?);
        }
        labels = next;
    }
    let total: f64 = {
        let degs: Vec<f64> = (0..n).map(|v| g.degree(v) + 1.0 + eps).collect();
        crate::graph::canonical_sum(&degs)
    };
    let d_out = labels[0].len();
    let mut acc = Array1::zeros(d_out);
    for v in 0..n {
        let mass = (g.degree(v) + 1.0 + eps) / total;
        for j in 0..d_out {
            acc[j] += mass * labels[v][j];
        }
    }
    Ok(model.readout.apply(&acc.view())?[0])
}

/// Lipschitz bound of an affine layer under the given label metric.
/// Activations contribute factor 1. L1 and L∞ bounds are the exact induced
/// operator norms (max column / max row absolute sum); the L2 bound is 50
/// deterministic power-method iterations inflated by 1%, hence an estimate
/// the audits flag as conservative.
pub fn layer_lipschitz_bound(phi: &AffineLayer, metric: MetricKind) -> f64 {
    let w = &phi.weights;
    match metric {
        MetricKind::L1 => (0..w.ncols())
            .map(|j| w.column(j).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        MetricKind::LInf => (0..w.nrows())
            .map(|i| w.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        MetricKind::L2 => {
            let mut v = Array1::from_elem(w.ncols(), 1.0 / (w.ncols() as f64).sqrt());
            let mut sigma = 0.0;
            for _ in 0..50 {
                let wv = w.dot(&v);
                let wtwv = w.t().dot(&wv);
                let norm = wtwv.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return 0.0;
                }
                v = wtwv.mapv(|x| x / norm);
                sigma = w.dot(&v).iter().map(|x| x * x).sum::<f64>().sqrt();
            }
            sigma * 1.01
        }
    }
}

pub const LIPSCHITZ_SLACK_TOL: f64 = 1e-8;

/// Outcome of one Lipschitz audit.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzAudit {
    /// `|h(G1) − h(G2)|`.
    pub lhs: f64,
    /// `C_ψ · Π C_i`.
    pub bound_constant: f64,
    /// WL distance between the induced chains at the model's depth.
    pub distance: f64,
    /// `bound_constant·distance − lhs`.
    pub slack: f64,
    /// `slack ≥ −1e-8`.
    pub satisfied: bool,
    /// True when the layer bounds are not exact (L2 metric).
    pub conservative: bool,
}

/// Audits the Lipschitz inequality on a pair of graphs: evaluates the
/// model on both, computes the WL distance of the matching induced chains
/// at depth `model.depth()`, and multiplies the per-layer bounds. Under L1
/// or L∞ the bounds are exact; L2 requires `allow_conservative`.
pub fn lipschitz_audit(
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    model: &MpgnnModel,
    metric: MetricKind,
    allow_conservative: bool,
) -> Result<LipschitzAudit, GnnError> {
    if metric == MetricKind::L2 && !allow_conservative {
        return Err(GnnError::ConservativeMetric);
    }
    let k = model.depth();
    let (h1, h2, c1, c2) = match model.variant {
        GnnVariant::QDamped { q } => (
            mpgnn_forward(g1, model)?,
            mpgnn_forward(g2, model)?,
            induce_q_damped(g1, q, metric)?,
            induce_q_damped(g2, q, metric)?,
        ),
        GnnVariant::EpsNormalized { eps } => (
            normalized_gin_forward(g1, model)?,
            normalized_gin_forward(g2, model)?,
            induce_eps_normalized(g1, eps, metric)?,
            induce_eps_normalized(g2, eps, metric)?,
        ),
    };
    let distance = wl_distance(&c1, &c2, k)?.distance;
    let mut bound_constant = layer_lipschitz_bound(&model.readout, metric);
    for phi in &model.layers {
        bound_constant *= layer_lipschitz_bound(phi, metric);
    }
    let lhs = (h1 - h2).abs();
    let slack = bound_constant * distance - lhs;
    Ok(LipschitzAudit {
        lhs,
        bound_constant,
        distance,
        slack,
        satisfied: slack >= -LIPSCHITZ_SLACK_TOL,
        conservative: metric == MetricKind::L2,
    })
}

/// Model sampling for audits and searches: weights uniform in [−1, 1],
/// biases zero, activations uniform over the three kinds. Layer output
/// dimensions come from `dims` (the input dimension is `input_dim`).
/// Deterministic given the RNG state.
pub fn sample_model(
    rng: &mut ChaCha8Rng,
    variant: GnnVariant,
    input_dim: usize,
    dims: &[usize],
) -> MpgnnModel {
    let acts = [Activation::Identity, Activation::Relu, Activation::Abs];
    let mut layers = Vec::with_capacity(dims.len());
    let mut d_in = input_dim;
    for &d_out in dims {
        let weights = Array2::from_shape_fn((d_out, d_in), |_| rng.gen_range(-1.0..=1.0));
        let act = acts[rng.gen_range(0..acts.len())];
        layers.push(AffineLayer::new(weights, Array1::zeros(d_out), act).unwrap());
        d_in = d_out;
    }
    let weights = Array2::from_shape_fn((1, d_in), |_| rng.gen_range(-1.0..=1.0));
    let act = acts[rng.gen_range(0..acts.len())];
    let readout = AffineLayer::new(weights, Array1::zeros(1), act).unwrap();
    MpgnnModel::new(variant, layers, readout).expect("sampled dimensions chain")
}

/// Report of a zero-set audit.
#[derive(Debug, Clone, Serialize)]
pub struct ZeroSetReport {
    pub distance: f64,
    pub trials: usize,
    /// Distance ≤ 1e-10: largest output deviation across sampled models
    /// (must stay ≤ 1e-8).
    pub max_output_deviation: Option<f64>,
    pub all_outputs_equal: Option<bool>,
    /// Positive distance: whether the separator search succeeded. A
    /// non-finding is logged, not a failure.
    pub separator_found: Option<bool>,
}

/// If the pair sits at WL distance ≤ 1e-10, checks that `trials` sampled
/// models give equal outputs within 1e-8; otherwise runs the randomized
/// separator search and records the outcome.
pub fn zero_set_audit(
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    q: f64,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<ZeroSetReport, GnnError> {
    let c1 = induce_q_damped(g1, q, MetricKind::L1)?;
    let c2 = induce_q_damped(g2, q, MetricKind::L1)?;
    let distance = wl_distance(&c1, &c2, k)?.distance;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if distance <= 1e-10 {
        let mut max_dev: f64 = 0.0;
        for _ in 0..trials {
            let dims: Vec<usize> = (0..=k).map(|_| rng.gen_range(1..=3)).collect();
            let model = sample_model(&mut rng, GnnVariant::QDamped { q }, g1.dim(), &dims);
            let h1 = mpgnn_forward(g1, &model)?;
            let h2 = mpgnn_forward(g2, &model)?;
            max_dev = max_dev.max((h1 - h2).abs());
        }
        Ok(ZeroSetReport {
            distance,
            trials,
            max_output_deviation: Some(max_dev),
            all_outputs_equal: Some(max_dev <= 1e-8),
            separator_found: None,
        })
    } else {
        let found = random_separator_search(g1, g2, q, k, trials, seed)?.is_some();
        Ok(ZeroSetReport {
            distance,
            trials,
            max_output_deviation: None,
            all_outputs_equal: None,
            separator_found: Some(found),
        })
    }
}

/// Best-effort randomized search for a separating model in the restricted
/// class with all intermediate dimensions equal to 1. Samples up to
/// `trials` seeded models and returns the first whose outputs differ by
/// more than `1e-6`, or `None`. A separator exists whenever the distance
/// is positive, but the guarantee is non-constructive, so a non-finding is
/// recorded rather than treated as a contradiction.
pub fn random_separator_search(
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    q: f64,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<Option<MpgnnModel>, GnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = vec![1usize; k + 1];
    for _ in 0..trials {
        let model = sample_model(&mut rng, GnnVariant::QDamped { q }, g1.dim(), &dims);
        let h1 = mpgnn_forward(g1, &model)?;
        let h2 = mpgnn_forward(g2, &model)?;
        if (h1 - h2).abs() > 1e-6 {
            return Ok(Some(model));
        }
    }
    Ok(None)
}

/// JSON document for a model file: exactly one of `q` / `eps`, the layer
/// blocks, and the readout block.
#[derive(Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub layers: Vec<LayerDoc>,
    pub readout: LayerDoc,
}

/// A layer in the model file: row-major weights (`weights[i][j]` multiplies
/// input `j` into output `i`), bias, activation name.
#[derive(Serialize, Deserialize)]
pub struct LayerDoc {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: String,
}

impl LayerDoc {
    fn into_layer(self) -> Result<AffineLayer, GnnError> {
        let rows = self.weights.len();
        let cols = self.weights.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(GnnError::EmptyWeights);
        }
        let mut weights = Array2::zeros((rows, cols));
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != cols {
                return Err(GnnError::DimensionMismatch { expected: cols, got: row.len() });
            }
            for (j, &x) in row.iter().enumerate() {
                weights[[i, j]] = x;
            }
        }
        let activation = match self.activation.to_ascii_lowercase().as_str() {
            "identity" | "id" => Activation::Identity,
            "relu" => Activation::Relu,
            "abs" => Activation::Abs,
            other => return Err(GnnError::UnknownActivation(other.into())),
        };
        AffineLayer::new(weights, Array1::from(self.bias), activation)
    }

    fn from_layer(layer: &AffineLayer) -> Self {
        Self {
            weights: (0..layer.weights.nrows()).map(|i| layer.weights.row(i).to_vec()).collect(),
            bias: layer.bias.to_vec(),
            activation: match layer.activation {
                Activation::Identity => "identity".into(),
                Activation::Relu => "relu".into(),
                Activation::Abs => "abs".into(),
            },
        }
    }
}

impl ModelDoc {
    pub fn from_model(model: &MpgnnModel) -> Self {
        let (q, eps) = match model.variant {
            GnnVariant::QDamped { q } => (Some(q), None),
            GnnVariant::EpsNormalized { eps } => (None, Some(eps)),
        };
        Self {
            q,
            eps,
            layers: model.layers.iter().map(LayerDoc::from_layer).collect(),
            readout: LayerDoc::from_layer(&model.readout),
        }
    }

    pub fn into_model(self) -> Result<MpgnnModel, GnnError> {
        let variant = match (self.q, self.eps) {
            (Some(q), None) => GnnVariant::QDamped { q },
            (None, Some(eps)) => GnnVariant::EpsNormalized { eps },
            _ => return Err(GnnError::AmbiguousVariant),
        };
        let layers =
            self.layers.into_iter().map(LayerDoc::into_layer).collect::<Result<Vec<_>, _>>()?;
        let readout = self.readout.into_layer()?;
        MpgnnModel::new(variant, layers, readout)
    }
}
