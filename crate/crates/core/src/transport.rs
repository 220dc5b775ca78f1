//! Exact discrete optimal transport and a small dense LP solver.
//!
//! [`wasserstein`] solves the finite transportation problem
//! `min Σ cost(i,j)·π(i,j)` over couplings `π` with prescribed marginals,
//! using the transportation simplex (tree basis, Bland's entering/leaving
//! rule, deterministic pivoting). Every solve is certified by complementary
//! slackness before a value is returned.
//!
//! [`lp_solve`] is a dense two-phase tableau simplex for equality-form
//! problems `min cᵀx, Ax = b, x ≥ 0`, again with Bland's rule. It hosts the
//! path-space bicausal program, which is not a transportation problem.
//!
//! Instances are small (a few hundred variables); determinism matters more
//! than speed, so repeated runs produce bit-identical plans.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

/// Feasibility tolerance for marginal sums.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Tolerance for the complementary-slackness optimality certificate.
pub const OPTIMALITY_TOL: f64 = 1e-8;

const RC_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("shape mismatch: cost is {rows}x{cols}, marginals have lengths {mu} and {nu}")]
    ShapeMismatch { rows: usize, cols: usize, mu: usize, nu: usize },
    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),
    #[error("cost table contains a non-finite entry")]
    NonFiniteCost,
    #[error("cost table contains a negative entry")]
    NegativeCost,
    #[error("coupling table violates its marginals: {0}")]
    MarginalViolation(String),
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("malformed linear program: {0}")]
    MalformedProblem(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// A joint probability table over a product of two finite sets with
/// prescribed marginals. Row sums and column sums match the marginals
/// within [`FEASIBILITY_TOL`]; entries below `-1e-15` are rejected and
/// tiny negatives are clamped to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    probs: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl Coupling {
    pub fn new(
        mut probs: Array2<f64>,
        row_marginal: Array1<f64>,
        col_marginal: Array1<f64>,
    ) -> Result<Self, TransportError> {
        let (n, m) = probs.dim();
        if row_marginal.len() != n || col_marginal.len() != m {
            return Err(TransportError::ShapeMismatch {
                rows: n,
                cols: m,
                mu: row_marginal.len(),
                nu: col_marginal.len(),
            });
        }
        for x in probs.iter_mut() {
            if *x < -1e-15 {
                return Err(TransportError::MarginalViolation(format!(
                    "negative entry {x} in coupling table"
                )));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        for i in 0..n {
            let s: f64 = probs.row(i).sum();
            if (s - row_marginal[i]).abs() > FEASIBILITY_TOL {
                return Err(TransportError::MarginalViolation(format!(
                    "row {i} sums to {s}, expected {}",
                    row_marginal[i]
                )));
            }
        }
        for j in 0..m {
            let s: f64 = probs.column(j).sum();
            if (s - col_marginal[j]).abs() > FEASIBILITY_TOL {
                return Err(TransportError::MarginalViolation(format!(
                    "column {j} sums to {s}, expected {}",
                    col_marginal[j]
                )));
            }
        }
        Ok(Self { probs, row_marginal, col_marginal })
    }

    pub fn nrows(&self) -> usize {
        self.probs.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn row_marginal(&self) -> &Array1<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Array1<f64> {
        &self.col_marginal
    }

    /// `Σ cost(i,j)·π(i,j)`, accumulated in row-major order.
    pub fn expected_cost(&self, cost: &ArrayView2<f64>) -> f64 {
        let mut acc = 0.0;
        for (p, c) in self.probs.iter().zip(cost.iter()) {
            acc += p * c;
        }
        acc
    }

    /// The independent coupling `mu ⊗ nu`.
    pub fn product(mu: &ArrayView1<f64>, nu: &ArrayView1<f64>) -> Self {
        let probs =
            Array2::from_shape_fn((mu.len(), nu.len()), |(i, j)| mu[i] * nu[j]);
        Self { probs, row_marginal: mu.to_owned(), col_marginal: nu.to_owned() }
    }
}

/// An optimal transport solve: the optimum value, one optimal plan, and the
/// dual potentials certifying it.
#[derive(Debug, Clone)]
pub struct WassersteinResult {
    pub value: f64,
    pub plan: Coupling,
    pub dual_row: Vec<f64>,
    pub dual_col: Vec<f64>,
}

fn validate_marginal(v: &ArrayView1<f64>, name: &str) -> Result<(), TransportError> {
    let mut sum = 0.0;
    for &x in v.iter() {
        if !x.is_finite() || x < 0.0 {
            return Err(TransportError::InvalidMarginal(format!(
                "{name} has entry {x}; entries must be finite and nonnegative"
            )));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > FEASIBILITY_TOL {
        return Err(TransportError::InvalidMarginal(format!("{name} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Exact optimum of the transportation problem between `mu` and `nu` with
/// the given cost table. Zero-mass rows and columns are excluded from the
/// solve and come back as zero rows/columns of the plan. The value contract
/// is exact optimality; the returned plan is one optimal vertex (the plan
/// itself is not unique in general).
pub fn wasserstein(
    cost: &ArrayView2<f64>,
    mu: &ArrayView1<f64>,
    nu: &ArrayView1<f64>,
) -> Result<WassersteinResult, TransportError> {
    let (n, m) = cost.dim();
    if mu.len() != n || nu.len() != m {
        return Err(TransportError::ShapeMismatch { rows: n, cols: m, mu: mu.len(), nu: nu.len() });
    }
    for &c in cost.iter() {
        if !c.is_finite() {
            return Err(TransportError::NonFiniteCost);
        }
        if c < 0.0 {
            return Err(TransportError::NegativeCost);
        }
    }
    validate_marginal(mu, "mu")?;
    validate_marginal(nu, "nu")?;

    // Degenerate marginals: exclude zero-mass rows/cols instead of
    // perturbing; the full-size plan keeps them as zero rows/cols.
    let rows: Vec<usize> = (0..n).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| nu[j] > 0.0).collect();
    let cn = rows.len();
    let cm = cols.len();
    let mut ccost = Array2::zeros((cn, cm));
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            ccost[[a, b]] = cost[[i, j]];
        }
    }
    let csupply: Vec<f64> = rows.iter().map(|&i| mu[i]).collect();
    let cdemand: Vec<f64> = cols.iter().map(|&j| nu[j]).collect();

    let (alloc, u, v) = transport_simplex(&ccost, &csupply, &cdemand)?;

    let mut plan = Array2::zeros((n, m));
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            plan[[i, j]] = alloc[[a, b]];
        }
    }
    let mut dual_row = vec![0.0; n];
    let mut dual_col = vec![0.0; m];
    for (a, &i) in rows.iter().enumerate() {
        dual_row[i] = u[a];
    }
    for (b, &j) in cols.iter().enumerate() {
        dual_col[j] = v[b];
    }

    certify(&ccost.view(), &alloc.view(), &csupply, &cdemand, &u, &v)?;

    let mut value = 0.0;
    for (p, c) in plan.iter().zip(cost.iter()) {
        value += p * c;
    }
    let plan = Coupling::new(plan, mu.to_owned(), nu.to_owned())?;
    Ok(WassersteinResult { value, plan, dual_row, dual_col })
}

/// Complementary-slackness certificate: primal feasibility, dual
/// feasibility of the potentials, and `plan > 0 ⟹ reduced cost ≈ 0`,
/// plus a strong-duality gap check. All at [`OPTIMALITY_TOL`].
fn certify(
    cost: &ArrayView2<f64>,
    plan: &ArrayView2<f64>,
    supply: &[f64],
    demand: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<(), TransportError> {
    let (n, m) = cost.dim();
    for i in 0..n {
        let s: f64 = plan.row(i).sum();
        if (s - supply[i]).abs() > FEASIBILITY_TOL {
            return Err(TransportError::NumericalFailure(format!(
                "certificate: row {i} sum off by {}",
                (s - supply[i]).abs()
            )));
        }
    }
    for j in 0..m {
        let s: f64 = plan.column(j).sum();
        if (s - demand[j]).abs() > FEASIBILITY_TOL {
            return Err(TransportError::NumericalFailure(format!(
                "certificate: column {j} sum off by {}",
                (s - demand[j]).abs()
            )));
        }
    }
    let mut primal = 0.0;
    for (p, c) in plan.iter().zip(cost.iter()) {
        primal += p * c;
    }
    let mut dual = 0.0;
    for i in 0..n {
        dual += u[i] * supply[i];
    }
    for j in 0..m {
        dual += v[j] * demand[j];
    }
    for i in 0..n {
        for j in 0..m {
            let rc = cost[[i, j]] - u[i] - v[j];
            if rc < -OPTIMALITY_TOL {
                return Err(TransportError::NumericalFailure(format!(
                    "certificate: dual infeasible at ({i},{j}): reduced cost {rc}"
                )));
            }
            if plan[[i, j]] > FEASIBILITY_TOL && rc.abs() > OPTIMALITY_TOL {
                return Err(TransportError::NumericalFailure(format!(
                    "certificate: complementary slackness violated at ({i},{j})"
                )));
            }
        }
    }
    if (primal - dual).abs() > OPTIMALITY_TOL * (1.0 + primal.abs()) {
        return Err(TransportError::NumericalFailure(format!(
            "certificate: duality gap {}",
            (primal - dual).abs()
        )));
    }
    Ok(())
}

/// Transportation simplex on a balanced problem with strictly positive
/// supplies/demands. Returns the allocation table and dual potentials.
fn transport_simplex(
    cost: &Array2<f64>,
    supply: &[f64],
    demand: &[f64],
) -> Result<(Array2<f64>, Vec<f64>, Vec<f64>), TransportError> {
    let n = supply.len();
    let m = demand.len();
    let mut alloc = Array2::<f64>::zeros((n, m));
    let mut basic = vec![false; n * m];
    // adjacency of the basis tree: rows 0..n, cols n..n+m
    let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut col_adj: Vec<Vec<usize>> = vec![Vec::new(); m];

    let add_basic = |basic: &mut Vec<bool>,
                         row_adj: &mut Vec<Vec<usize>>,
                         col_adj: &mut Vec<Vec<usize>>,
                         i: usize,
                         j: usize| {
        basic[i * m + j] = true;
        row_adj[i].push(j);
        col_adj[j].push(i);
    };

    // Northwest-corner initial basis: a staircase spanning tree with
    // exactly n + m - 1 basic cells (some possibly at zero).
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let a = s[i].min(d[j]);
        alloc[[i, j]] = a;
        add_basic(&mut basic, &mut row_adj, &mut col_adj, i, j);
        s[i] -= a;
        d[j] -= a;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if (s[i] <= d[j] && i < n - 1) || j == m - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }

    let max_iters = 1000 + 50 * n * m;
    for _ in 0..max_iters {
        let (u, v) = potentials(cost, &row_adj, &col_adj)?;

        // Bland: lowest row-major index with negative reduced cost.
        let mut entering = None;
        'scan: for ei in 0..n {
            for ej in 0..m {
                if !basic[ei * m + ej] && cost[[ei, ej]] - u[ei] - v[ej] < -RC_TOL {
                    entering = Some((ei, ej));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok((alloc, u, v));
        };

        // Unique tree path from row node ei to col node ej; the cycle is
        // the path plus the entering cell. Cells along the path alternate
        // -, +, -, ... (the first shares a row with the entering +).
        let path = tree_path(n, m, &row_adj, &col_adj, ei, ej);
        let mut theta = f64::INFINITY;
        let mut leaving: Option<(usize, usize)> = None;
        for (t, &(pi, pj)) in path.iter().enumerate() {
            if t % 2 == 0 {
                let a = alloc[[pi, pj]];
                // Bland tie-break: lowest cell index among the minimizers.
                if a < theta || (a == theta && leaving.map_or(true, |(li, lj)| (pi, pj) < (li, lj)))
                {
                    theta = a;
                    leaving = Some((pi, pj));
                }
            }
        }
        let (li, lj) = leaving.ok_or_else(|| {
            TransportError::NumericalFailure("entering cell produced no cycle".into())
        })?;

        alloc[[ei, ej]] += theta;
        for (t, &(pi, pj)) in path.iter().enumerate() {
            if t % 2 == 0 {
                alloc[[pi, pj]] -= theta;
            } else {
                alloc[[pi, pj]] += theta;
            }
        }
        alloc[[li, lj]] = 0.0;

        basic[li * m + lj] = false;
        row_adj[li].retain(|&c| c != lj);
        col_adj[lj].retain(|&r| r != li);
        add_basic(&mut basic, &mut row_adj, &mut col_adj, ei, ej);
    }
    Err(TransportError::NumericalFailure("transportation simplex iteration limit".into()))
}

/// Dual potentials from the basis tree: u[0] = 0, then u_i + v_j = c_ij on
/// basic cells, propagated by BFS.
fn potentials(
    cost: &Array2<f64>,
    row_adj: &[Vec<usize>],
    col_adj: &[Vec<usize>],
) -> Result<(Vec<f64>, Vec<f64>), TransportError> {
    let n = row_adj.len();
    let m = col_adj.len();
    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; m];
    u[0] = 0.0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(0usize); // node ids: 0..n rows, n..n+m cols
    while let Some(node) = queue.pop_front() {
        if node < n {
            for &j in &row_adj[node] {
                if v[j].is_nan() {
                    v[j] = cost[[node, j]] - u[node];
                    queue.push_back(n + j);
                }
            }
        } else {
            let j = node - n;
            for &i in &col_adj[j] {
                if u[i].is_nan() {
                    u[i] = cost[[i, j]] - v[j];
                    queue.push_back(i);
                }
            }
        }
    }
    if u.iter().any(|x| x.is_nan()) || v.iter().any(|x| x.is_nan()) {
        return Err(TransportError::NumericalFailure("basis tree is not spanning".into()));
    }
    Ok((u, v))
}

/// Cells along the unique tree path from row `from_row` to column `to_col`.
fn tree_path(
    n: usize,
    m: usize,
    row_adj: &[Vec<usize>],
    col_adj: &[Vec<usize>],
    from_row: usize,
    to_col: usize,
) -> Vec<(usize, usize)> {
    let total = n + m;
    let mut parent = vec![usize::MAX; total];
    let mut seen = vec![false; total];
    let start = from_row;
    let goal = n + to_col;
    seen[start] = true;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    while let Some(node) = queue.pop_front() {
        if node == goal {
            break;
        }
        if node < n {
            for &j in &row_adj[node] {
                if !seen[n + j] {
                    seen[n + j] = true;
                    parent[n + j] = node;
                    queue.push_back(n + j);
                }
            }
        } else {
            for &i in &col_adj[node - n] {
                if !seen[i] {
                    seen[i] = true;
                    parent[i] = node;
                    queue.push_back(i);
                }
            }
        }
    }
    let mut cells = Vec::new();
    let mut node = goal;
    while node != start {
        let p = parent[node];
        let (i, j) = if node < n { (node, p - n) } else { (p, node - n) };
        cells.push((i, j));
        node = p;
    }
    cells.reverse();
    cells
}

/// An equality-form linear program: minimize `objective · x` subject to
/// `constraints · x = rhs` and `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub solution: Vec<f64>,
}

/// Selects a maximal linearly independent subset of the constraint rows
/// (in input order) by incremental Gaussian elimination. Dependent rows
/// whose right-hand side is inconsistent with the span make the system
/// infeasible outright.
fn independent_rows(
    constraints: &[Vec<f64>],
    rhs: &[f64],
    nvars: usize,
) -> Result<Vec<usize>, TransportError> {
    let mut echelon: Vec<Vec<f64>> = Vec::new();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut kept = Vec::new();
    for (idx, row) in constraints.iter().enumerate() {
        let mut work: Vec<f64> = row.iter().cloned().chain([rhs[idx]]).collect();
        let scale = work[..nvars].iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(1.0);
        for (b, &pc) in echelon.iter().zip(&pivot_cols) {
            let f = work[pc];
            if f != 0.0 {
                for (w, bb) in work.iter_mut().zip(b.iter()) {
                    *w -= f * bb;
                }
                work[pc] = 0.0;
            }
        }
        let mut best_col = usize::MAX;
        let mut best_abs = 0.0;
        for (j, w) in work[..nvars].iter().enumerate() {
            if w.abs() > best_abs {
                best_abs = w.abs();
                best_col = j;
            }
        }
        if best_abs <= 1e-12 * scale {
            // row is in the span of the kept rows; its right-hand side
            // must be implied too, otherwise the system is contradictory
            if work[nvars].abs() > 1e-7 * scale.max(rhs[idx].abs().max(1.0)) {
                return Err(TransportError::Infeasible);
            }
            continue;
        }
        let inv = 1.0 / work[best_col];
        for w in work.iter_mut() {
            *w *= inv;
        }
        work[best_col] = 1.0;
        echelon.push(work);
        pivot_cols.push(best_col);
        kept.push(idx);
    }
    Ok(kept)
}

/// Dense two-phase tableau simplex with Bland's anti-cycling rule.
/// Deterministic: identical inputs produce identical pivot sequences.
/// Linearly dependent constraint rows are dropped up front (the systems
/// this solver hosts are heavily redundant).
pub fn lp_solve(p: &LpProblem) -> Result<LpSolution, TransportError> {
    let nvars = p.objective.len();
    if p.rhs.len() != p.constraints.len() {
        return Err(TransportError::MalformedProblem(format!(
            "{} constraint rows but {} right-hand sides",
            p.constraints.len(),
            p.rhs.len()
        )));
    }
    for (i, row) in p.constraints.iter().enumerate() {
        if row.len() != nvars {
            return Err(TransportError::MalformedProblem(format!(
                "constraint {i} has {} coefficients, expected {nvars}",
                row.len()
            )));
        }
    }
    let all = p
        .objective
        .iter()
        .chain(p.rhs.iter())
        .chain(p.constraints.iter().flatten());
    for &x in all {
        if !x.is_finite() {
            return Err(TransportError::MalformedProblem("non-finite coefficient".into()));
        }
    }

    let kept = independent_rows(&p.constraints, &p.rhs, nvars)?;
    let nrows = kept.len();

    let total = nvars + nrows; // real variables then artificials
    let stride = total + 1; // + rhs column
    let mut t = vec![0.0f64; nrows * stride];
    let mut basis = vec![0usize; nrows];
    for (i, &orig) in kept.iter().enumerate() {
        let flip = if p.rhs[orig] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nvars {
            t[i * stride + j] = flip * p.constraints[orig][j];
        }
        t[i * stride + nvars + i] = 1.0;
        t[i * stride + total] = flip * p.rhs[orig];
        basis[i] = nvars + i;
    }
    let mut active: Vec<bool> = vec![true; nrows];

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![0.0f64; stride];
    for i in 0..nrows {
        for j in 0..stride {
            obj[j] -= t[i * stride + j];
        }
    }
    for j in nvars..total {
        obj[j] = 0.0;
    }
    simplex_iterate(&mut t, &mut obj, &mut basis, &active, stride, nvars, true)?;
    let phase1 = -obj[total];
    if phase1 > FEASIBILITY_TOL {
        return Err(TransportError::Infeasible);
    }

    // Drive surviving artificials out of the basis; rows that offer no
    // pivot are redundant and get dropped.
    for i in 0..nrows {
        if basis[i] < nvars {
            continue;
        }
        let mut pivot_col = None;
        for j in 0..nvars {
            if t[i * stride + j].abs() > 1e-7 {
                pivot_col = Some(j);
                break;
            }
        }
        match pivot_col {
            Some(j) => {
                pivot(&mut t, &mut obj, &active, stride, i, j);
                basis[i] = j;
            }
            None => active[i] = false,
        }
    }

    // Phase 2 objective: reduced costs of the real objective under the
    // current basis.
    for j in 0..stride {
        obj[j] = if j < nvars { p.objective[j] } else { 0.0 };
    }
    for i in 0..nrows {
        if !active[i] || basis[i] >= nvars {
            continue;
        }
        let cb = p.objective[basis[i]];
        if cb != 0.0 {
            for j in 0..stride {
                obj[j] -= cb * t[i * stride + j];
            }
        }
    }
    simplex_iterate(&mut t, &mut obj, &mut basis, &active, stride, nvars, false)?;

    let mut solution = vec![0.0; nvars];
    for i in 0..nrows {
        if active[i] && basis[i] < nvars {
            solution[basis[i]] = t[i * stride + total].max(0.0);
        }
    }
    // final audit against the original (unreduced) system: pivoting drift
    // must not be silently returned as a solution
    for (i, row) in p.constraints.iter().enumerate() {
        let mut acc = 0.0;
        for (a, xv) in row.iter().zip(&solution) {
            acc += a * xv;
        }
        let dev = (acc - p.rhs[i]).abs();
        if dev > 1e-8 * (1.0 + p.rhs[i].abs()) {
            return Err(TransportError::NumericalFailure(format!(
                "solution violates constraint {i} by {dev:.3e}"
            )));
        }
    }
    let mut value = 0.0;
    for j in 0..nvars {
        value += p.objective[j] * solution[j];
    }
    Ok(LpSolution { value, solution })
}

/// Runs simplex pivots until no entering column remains.
///
/// Entering: Dantzig (most negative reduced cost) while progress is made,
/// switching to Bland's smallest-index rule after a run of degenerate
/// pivots; Bland is the anti-cycling device. Leaving: minimum ratio, exact
/// Bland tie-break (smallest basic-variable index among the minimizers).
/// Tiny negative right-hand sides are clamped so degenerate noise cannot
/// drive the ratio test backwards. Deterministic.
///
/// In phase 1 artificial columns may enter (but never re-enter once they
/// have left the basis); in phase 2 they may not enter at all.
fn simplex_iterate(
    t: &mut [f64],
    obj: &mut [f64],
    basis: &mut [usize],
    active: &[bool],
    stride: usize,
    nvars: usize,
    phase1: bool,
) -> Result<(), TransportError> {
    let total = stride - 1;
    let cols = if phase1 { total } else { nvars };
    let nrows = t.len() / stride;
    let mut banned = vec![false; cols];
    let max_iters = 200_000usize;
    let mut degenerate_run = 0usize;
    for _ in 0..max_iters {
        // Degenerate stalls engage Bland's rule; otherwise Dantzig.
        let bland = degenerate_run >= 24;
        let mut entering = None;
        if bland {
            for (j, &b) in banned.iter().enumerate().take(cols) {
                if !b && obj[j] < -RC_TOL {
                    entering = Some(j);
                    break;
                }
            }
        } else {
            let mut best = -RC_TOL;
            for (j, &b) in banned.iter().enumerate().take(cols) {
                if !b && obj[j] < best {
                    best = obj[j];
                    entering = Some(j);
                }
            }
        }
        let Some(j) = entering else {
            return Ok(());
        };
        // Ratio test. Pivot elements below STRONG_PIVOT amplify noise
        // badly, so they are eligible only when nothing better exists.
        // Ties: Bland mode takes the smallest basic-variable index
        // (anti-cycling), otherwise the largest pivot element wins
        // (stability). Deterministic either way.
        const STRONG_PIVOT: f64 = 1e-7;
        let pick = |threshold: f64| -> Option<usize> {
            let mut min_ratio = f64::INFINITY;
            let mut pr: Option<usize> = None;
            for i in 0..nrows {
                if !active[i] {
                    continue;
                }
                let a = t[i * stride + j];
                if a > threshold {
                    let ratio = t[i * stride + total].max(0.0) / a;
                    if ratio < min_ratio - 1e-12 {
                        min_ratio = ratio;
                        pr = Some(i);
                    } else if ratio <= min_ratio + 1e-12 {
                        if let Some(bi) = pr {
                            let take = if bland {
                                basis[i] < basis[bi]
                            } else {
                                a > t[bi * stride + j]
                            };
                            if take {
                                pr = Some(i);
                            }
                        }
                    }
                }
            }
            pr
        };
        let pr = pick(STRONG_PIVOT).or_else(|| pick(PIVOT_TOL));
        let Some(pr) = pr else {
            if phase1 {
                return Err(TransportError::NumericalFailure(
                    "phase-1 problem reported unbounded".into(),
                ));
            }
            return Err(TransportError::Unbounded);
        };
        let min_ratio = t[pr * stride + total].max(0.0) / t[pr * stride + j];
        if min_ratio <= 1e-12 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        if phase1 && basis[pr] >= nvars {
            banned[basis[pr]] = true;
        }
        pivot(t, obj, active, stride, pr, j);
        basis[pr] = j;
        // keep right-hand sides nonnegative against pivot noise
        for i in 0..nrows {
            let b = &mut t[i * stride + total];
            if *b < 0.0 && *b > -1e-11 {
                *b = 0.0;
            }
        }
    }
    Err(TransportError::NumericalFailure("simplex iteration limit".into()))
}

fn pivot(t: &mut [f64], obj: &mut [f64], active: &[bool], stride: usize, pr: usize, pc: usize) {
    let nrows = t.len() / stride;
    let p = t[pr * stride + pc];
    let inv = 1.0 / p;
    for j in 0..stride {
        t[pr * stride + j] *= inv;
    }
    t[pr * stride + pc] = 1.0;
    let (before, rest) = t.split_at_mut(pr * stride);
    let (prow, after) = rest.split_at_mut(stride);
    let eliminate = |row: &mut [f64]| {
        let f = row[pc];
        if f != 0.0 {
            for (x, p) in row.iter_mut().zip(prow.iter()) {
                *x -= f * p;
            }
            row[pc] = 0.0;
        }
    };
    for (i, row) in before.chunks_mut(stride).enumerate() {
        if active[i] {
            eliminate(row);
        }
    }
    for (i, row) in after.chunks_mut(stride).enumerate() {
        if active[pr + 1 + i] {
            eliminate(row);
        }
    }
    let _ = nrows;
    eliminate(obj);
}
