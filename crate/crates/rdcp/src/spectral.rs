//! Nyström discretization of the transformed branching operator
//! (Tφ)(t) = ∫ H_p(s) φ(s) min(t̂, t, s) ds, its principal eigenpair, and the root
//! μ(t̂_c) = 1 that locates the continuous-time critical time.
//!
//! For finite t̂ the image of T is constant on [t̂, ∞), so the half-line beyond t̂ is
//! represented exactly by one atom at t̂ of mass I_p(t̂). The remaining nodes are a
//! composite Gauss-Legendre rule on [0, t̂] with panels growing geometrically away from 0.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::distributions::{DegreeDistribution, DistError};
use crate::lambda_solver::{HazardModel, LambdaError};
use crate::numeric::{gl8, Dopri5, OdeError};

pub const DEFAULT_NODES: usize = 400;
pub const MIN_NODES: usize = 16;
/// Upper end of the bracket search for t̂_c.
pub const BRACKET_CAP: f64 = 1e6;
const PANEL_POINTS: usize = 8;
/// Length scale of the geometric panel map near t = 0.
const PANEL_SCALE: f64 = 0.5;
const TRACE_SPACING: f64 = 1e-6;
const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("t_hat = {t_hat} exceeds the table horizon {t_max}")]
    HorizonTooSmall { t_hat: f64, t_max: f64 },
    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("the 2-regular law is subcritical for every t_hat (t_c = 1, t_hat_c = infinity)")]
    DegenerateRegular,
    #[error("mu stays below 1 up to the bracket cap t_hat = {cap} (mu = {mu_at_cap})")]
    BracketFailure { cap: f64, mu_at_cap: f64 },
    #[error("the branching kernel is singular at a node with lambda = 0")]
    SingularAtZero,
    #[error("eigenvalue trace not increasing between t_hat = {t0} and {t1}")]
    NonMonotoneTrace { t0: f64, t1: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Lambda(#[from] LambdaError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Operator parameter: a finite t̂ or the t̂ = ∞ sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum THat {
    Finite(f64),
    Infinite,
}

/// Nodes s_i and weights w_i (H_p times quadrature weight, plus the tail atom) for T_{p,t̂}.
#[derive(Debug, Clone)]
pub struct OperatorDiscretization {
    t_hat: THat,
    horizon: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    sqrt_w: Vec<f64>,
}

/// Panel edges on [0, b]: e_j = b·(e^{κj/P} − 1)/(e^κ − 1) with κ = ln(1 + b/scale).
fn geometric_edges(b: f64, panels: usize) -> Vec<f64> {
    let kappa = (b / PANEL_SCALE).ln_1p();
    let denom = kappa.exp_m1();
    let mut e: Vec<f64> = (0..=panels).map(|j| b * (kappa * j as f64 / panels as f64).exp_m1() / denom).collect();
    e[panels] = b;
    e
}

/// Composite 8-point Gauss-Legendre nodes and plain quadrature weights on [a, b].
pub(crate) fn composite_rule(a: f64, b: f64, panels: usize, geometric: bool) -> (Vec<f64>, Vec<f64>) {
    let edges: Vec<f64> = if geometric {
        geometric_edges(b - a, panels).into_iter().map(|e| a + e).collect()
    } else {
        (0..=panels).map(|j| a + (b - a) * j as f64 / panels as f64).collect()
    };
    let mut xs = Vec::with_capacity(panels * PANEL_POINTS);
    let mut ws = Vec::with_capacity(panels * PANEL_POINTS);
    for w in edges.windows(2) {
        for (x, wt) in gl8().mapped(w[0], w[1]) {
            xs.push(x);
            ws.push(wt);
        }
    }
    (xs, ws)
}

/// Builds the Nyström discretization of T_{p,t̂} with about `n_nodes` interior nodes.
pub fn discretize(h: &HazardModel, t_hat: THat, n_nodes: usize) -> Result<OperatorDiscretization, SpectralError> {
    if n_nodes < MIN_NODES {
        return Err(SpectralError::InvalidArgument(format!("n_nodes = {n_nodes} < {MIN_NODES}")));
    }
    let horizon = match t_hat {
        THat::Finite(t) => {
            if !(t >= 0.0) {
                return Err(SpectralError::InvalidArgument(format!("t_hat = {t}")));
            }
            if t > h.t_max() {
                return Err(SpectralError::HorizonTooSmall { t_hat: t, t_max: h.t_max() });
            }
            t
        }
        THat::Infinite => h.t_max(),
    };
    let panels = n_nodes.div_ceil(PANEL_POINTS);
    let (mut nodes, mut weights) =
        if horizon > 0.0 { composite_rule(0.0, horizon, panels, true) } else { (Vec::new(), Vec::new()) };
    for (s, w) in nodes.iter().zip(weights.iter_mut()) {
        *w *= h.hazard_density(*s)?;
    }
    nodes.push(horizon);
    weights.push(h.survival(horizon)?);
    let sqrt_w = weights.iter().map(|w| w.sqrt()).collect();
    Ok(OperatorDiscretization { t_hat, horizon, nodes, weights, sqrt_w })
}

impl OperatorDiscretization {
    pub fn t_hat(&self) -> THat {
        self.t_hat
    }

    /// Right end of the node range (t̂, or t_max for the sentinel).
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// K(s_i, s_j) = min(t̂, s_i, s_j).
    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        self.nodes[i].min(self.nodes[j]).min(self.horizon)
    }

    /// Present for the sentinel: the operator is T_{t_max}, a lower bound for T_∞.
    pub fn truncation_note(&self) -> Option<String> {
        match self.t_hat {
            THat::Infinite => Some(format!(
                "t_hat = infinity evaluated as min(t, s) on [0, {}] with the tail lumped at the horizon; eigenvalues are lower bounds",
                self.horizon
            )),
            THat::Finite(_) => None,
        }
    }

    /// Dense M_ij = √w_i K_ij √w_j, filled from the upper triangle so M = Mᵀ exactly.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.sqrt_w[i] * self.kernel(i, j) * self.sqrt_w[j];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// M v in O(N) using the ordering of the nodes.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        let x: Vec<f64> = v.iter().zip(&self.sqrt_w).map(|(a, b)| a * b).collect();
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + x[i];
        }
        let mut low = 0.0;
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            low += self.nodes[i] * x[i];
            y.push(self.sqrt_w[i] * (low + self.nodes[i] * suffix[i + 1]));
        }
        y
    }

    /// Converts a vector of the symmetric problem into φ on the nodes.
    pub fn to_function(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.sqrt_w).map(|(a, s)| if *s > 0.0 { a / s } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EigenMethod {
    PowerIteration,
    DenseFallback,
}

#[derive(Debug, Clone, Serialize)]
pub struct Eigenpair {
    pub mu: f64,
    /// Unit eigenvector of the symmetrized matrix, positive orientation.
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: EigenMethod,
}

impl Eigenpair {
    pub fn is_strictly_positive(&self) -> bool {
        self.vector.iter().all(|&x| x > 0.0)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Power iteration from the all-ones vector with Rayleigh-quotient stopping.
pub fn power_iteration(op: &OperatorDiscretization, tol: f64) -> Result<Eigenpair, SpectralError> {
    let n = op.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITER {
        let y = op.apply(&v);
        let mu: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok(Eigenpair {
                mu: 0.0,
                vector: v,
                residual: 0.0,
                iterations: it,
                method: EigenMethod::PowerIteration,
            });
        }
        residual = y.iter().zip(&v).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt();
        let next: Vec<f64> = y.iter().map(|a| a / ny).collect();
        if residual <= tol * mu {
            let y2 = op.apply(&next);
            let mu2: f64 = next.iter().zip(&y2).map(|(a, b)| a * b).sum();
            let res2 = y2.iter().zip(&next).map(|(a, b)| (a - mu2 * b).powi(2)).sum::<f64>().sqrt();
            return Ok(Eigenpair {
                mu: mu2,
                vector: next,
                residual: res2,
                iterations: it,
                method: EigenMethod::PowerIteration,
            });
        }
        v = next;
    }
    Err(SpectralError::NoConvergence { iterations: POWER_MAX_ITER, residual })
}

/// Full symmetric eigensolve; used when power iteration stalls.
pub fn dense_principal(op: &OperatorDiscretization) -> Eigenpair {
    let m = op.matrix();
    let eig = SymmetricEigen::new(m.clone());
    let (k, &mu) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty matrix");
    let mut vector: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    if vector.iter().sum::<f64>() < 0.0 {
        vector.iter_mut().for_each(|x| *x = -*x);
    }
    let y = op.apply(&vector);
    let residual = y.iter().zip(&vector).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt();
    Eigenpair { mu, vector, residual, iterations: 0, method: EigenMethod::DenseFallback }
}

/// Principal eigenpair: power iteration, falling back to the dense solver.
pub fn principal_eigenvalue(op: &OperatorDiscretization, tol: f64) -> Result<Eigenpair, SpectralError> {
    match power_iteration(op, tol) {
        Ok(e) => Ok(e),
        Err(SpectralError::NoConvergence { .. }) => Ok(dense_principal(op)),
        Err(e) => Err(e),
    }
}

/// μ(t̂) at several t̂ values, evaluated concurrently.
pub fn eigenvalue_trace(
    h: &HazardModel,
    t_hats: &[f64],
    n_nodes: usize,
    tol: f64,
) -> Result<Vec<(f64, f64)>, SpectralError> {
    t_hats
        .par_iter()
        .map(|&t| {
            let op = discretize(h, THat::Finite(t), n_nodes)?;
            Ok((t, principal_eigenvalue(&op, tol)?.mu))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralOptions {
    pub n_nodes: usize,
    /// Relative tolerance on t̂_c.
    pub tol: f64,
    /// Residual tolerance of the eigen-solver.
    pub eig_tol: f64,
    /// Tolerance of the λ-table cross-check.
    pub table_tol: f64,
    pub cap: f64,
    /// Extrapolate the roots at N and 2N nodes.
    pub richardson: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            n_nodes: DEFAULT_NODES,
            tol: 1e-11,
            eig_tol: 1e-10,
            table_tol: 1e-10,
            cap: BRACKET_CAP,
            richardson: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalTimeResult {
    pub p: DegreeDistribution,
    /// Richardson-extrapolated root of μ(t̂) = 1.
    pub t_hat_c: f64,
    pub t_c: f64,
    /// (t̂, μ) pairs of the N-node search, sorted by t̂.
    pub eigenvalue_trace: Vec<(f64, f64)>,
    /// μ at the root of the finest discretization (`discrete_root`).
    pub mu_at_root: f64,
    pub discrete_root: f64,
    /// |root(2N) − root(N)|, zero without extrapolation.
    pub richardson_gap: f64,
    pub nodes: Vec<f64>,
    /// Eigenfunction on the nodes, normalized in L²(H_p).
    pub eigenfunction: Vec<f64>,
    pub n_nodes: usize,
    /// Right end of the node range at the root (t̂_c; the tail is lumped there).
    pub t_max: f64,
    /// Eigen-solver residual at the root.
    pub residual: f64,
    pub eigen_method: EigenMethod,
}

/// Builds a hazard model whose horizon covers the whole bracket search.
pub fn hazard_for_search(p: &DegreeDistribution, opts: &SpectralOptions) -> Result<HazardModel, SpectralError> {
    Ok(HazardModel::build(p, opts.cap, opts.table_tol)?)
}

/// t̂_c: root of μ(t̂) = 1 by geometric bracketing then bisection.
pub fn critical_time_hat(p: &DegreeDistribution, opts: &SpectralOptions) -> Result<CriticalTimeResult, SpectralError> {
    if p.is_two_regular() {
        return Err(SpectralError::DegenerateRegular);
    }
    let h = hazard_for_search(p, opts)?;
    critical_time_hat_with(&h, opts)
}

pub fn critical_time_hat_with(h: &HazardModel, opts: &SpectralOptions) -> Result<CriticalTimeResult, SpectralError> {
    let p = h.distribution();
    if p.is_two_regular() {
        return Err(SpectralError::DegenerateRegular);
    }
    let coarse = solve_root(h, opts, opts.n_nodes, None)?;
    let (t_hat_c, fine) = if opts.richardson {
        let fine = solve_root(h, opts, 2 * opts.n_nodes, Some(coarse.root))?;
        // the Nyström error of the kinked kernel is O(N⁻²)
        (fine.root + (fine.root - coarse.root) / 3.0, Some(fine))
    } else {
        (coarse.root, None)
    };
    let richardson_gap = fine.as_ref().map_or(0.0, |f| (f.root - coarse.root).abs());
    let t_c = 0.5 * h.mean_root_degree(t_hat_c)?;
    let trace = coarse.trace;
    let last = fine.unwrap_or(RootSolve { trace: Vec::new(), ..coarse });
    let eigenfunction = last.op.to_function(&last.eig.vector);
    Ok(CriticalTimeResult {
        p: p.clone(),
        t_hat_c,
        t_c,
        eigenvalue_trace: trace,
        mu_at_root: last.mu_root,
        discrete_root: last.root,
        richardson_gap,
        nodes: last.op.nodes().to_vec(),
        eigenfunction,
        n_nodes: last.op.len(),
        t_max: last.op.horizon(),
        residual: last.eig.residual,
        eigen_method: last.eig.method,
    })
}

struct RootSolve {
    root: f64,
    mu_root: f64,
    op: OperatorDiscretization,
    eig: Eigenpair,
    trace: Vec<(f64, f64)>,
}

/// Root of μ(t̂) = 1 for one discretization size. A guess first tries a ±1% bracket.
fn solve_root(
    h: &HazardModel,
    opts: &SpectralOptions,
    n_nodes: usize,
    guess: Option<f64>,
) -> Result<RootSolve, SpectralError> {
    let p = h.distribution();
    let cap = opts.cap.min(h.t_max());
    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut eval = |t: f64| -> Result<(f64, OperatorDiscretization, Eigenpair), SpectralError> {
        let op = discretize(h, THat::Finite(t), n_nodes)?;
        let e = principal_eigenvalue(&op, opts.eig_tol)?;
        trace.push((t, e.mu));
        Ok((e.mu, op, e))
    };

    let tight = match guess {
        Some(g) if g * 1.01 <= cap => {
            let (a, b) = (g * 0.99, g * 1.01);
            let (ma, mb) = (eval(a)?.0, eval(b)?.0);
            (ma < 1.0 && mb > 1.0).then_some((a, ma, b, mb))
        }
        _ => None,
    };
    let (mut lo, mut mu_lo, mut hi, mut mu_hi) = match tight {
        Some(b) => b,
        None => expand_bracket(&mut eval, (p.asymptotic_tc_hat()? / 4.0).min(cap), cap)?,
    };

    while hi - lo > opts.tol * hi {
        let mid = 0.5 * (lo + hi);
        let mu = eval(mid)?.0;
        if mu < 1.0 {
            lo = mid;
            mu_lo = mu;
        } else {
            hi = mid;
            mu_hi = mu;
        }
    }
    // final secant step inside the tight bracket
    let root = lo + (1.0 - mu_lo) * (hi - lo) / (mu_hi - mu_lo);
    let root = root.clamp(lo, hi);
    let (mu_root, op, eig) = eval(root)?;

    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    // bisection steps below the eigen-solver resolution carry no ordering information
    trace.dedup_by(|a, b| a.0 - b.0 < TRACE_SPACING * a.0);
    check_monotone(&trace)?;
    Ok(RootSolve { root, mu_root, op, eig, trace })
}

/// Brackets μ = 1 by ×4 steps from `start`, returning (lo, μ(lo), hi, μ(hi)).
fn expand_bracket<F>(eval: &mut F, start: f64, cap: f64) -> Result<(f64, f64, f64, f64), SpectralError>
where
    F: FnMut(f64) -> Result<(f64, OperatorDiscretization, Eigenpair), SpectralError>,
{
    let mut lo = start;
    let first = eval(lo)?.0;
    if first >= 1.0 {
        let (mut hi, mut mu_hi) = (lo, first);
        loop {
            lo /= 4.0;
            let mu_lo = eval(lo)?.0;
            if mu_lo < 1.0 {
                return Ok((lo, mu_lo, hi, mu_hi));
            }
            hi = lo;
            mu_hi = mu_lo;
        }
    }
    if lo >= cap {
        return Err(SpectralError::BracketFailure { cap, mu_at_cap: first });
    }
    let (mut mu_lo, mut hi) = (first, lo);
    loop {
        hi = (hi * 4.0).min(cap);
        let mu_hi = eval(hi)?.0;
        if mu_hi > 1.0 {
            return Ok((lo, mu_lo, hi, mu_hi));
        }
        if hi >= cap {
            return Err(SpectralError::BracketFailure { cap, mu_at_cap: mu_hi });
        }
        lo = hi;
        mu_lo = mu_hi;
    }
}

/// Errors unless μ is strictly increasing along a trace sorted by t̂.
pub fn check_monotone(trace: &[(f64, f64)]) -> Result<(), SpectralError> {
    for w in trace.windows(2) {
        if w[1].1 <= w[0].1 {
            return Err(SpectralError::NonMonotoneTrace { t0: w[0].0, t1: w[1].0 });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteCriticalTime {
    pub t_c: f64,
    /// True for the 2-regular law, where t_c = 1 and t̂_c = ∞.
    pub degenerate: bool,
    pub continuous: Option<CriticalTimeResult>,
}

/// t_c = ½ F_p(t̂_c); the 2-regular law returns exactly 1 with the degenerate flag.
pub fn critical_time_discrete(
    p: &DegreeDistribution,
    opts: &SpectralOptions,
) -> Result<DiscreteCriticalTime, SpectralError> {
    if p.is_two_regular() {
        return Ok(DiscreteCriticalTime { t_c: 1.0, degenerate: true, continuous: None });
    }
    let r = critical_time_hat(p, opts)?;
    Ok(DiscreteCriticalTime { t_c: r.t_c, degenerate: false, continuous: Some(r) })
}

/// Solution of w″ = −H_p w, w(0) = 0, w′(0) = 1 integrated together with λ_p and
/// ∫ H_p w². Rows are [λ, w, w′, ∫₀ᵗ H w²] at the requested times.
pub fn solve_eigenfunction_ode(p: &DegreeDistribution, times: &[f64]) -> Result<Vec<[f64; 4]>, SpectralError> {
    let polys = crate::lambda_solver::TailPolynomials::new(p);
    let solver = Dopri5::with_tol(1e-13, 1e-15);
    let rows = solver.solve(
        |_, y, d| {
            let hz = polys.hazard(y[0]);
            d[0] = polys.lambda_prime(y[0]);
            d[1] = y[2];
            d[2] = -hz * y[1];
            d[3] = hz * y[1] * y[1];
        },
        0.0,
        &[0.0, 0.0, 1.0, 0.0],
        times,
    )?;
    Ok(rows.into_iter().map(|r| [r[0], r[1], r[2], r[3]]).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenfunctionReport {
    /// max_i |φ_i − w(s_i)/‖w‖| over the nodes (atom included).
    pub max_gap: f64,
    /// min of the ODE solution on the nodes of [0, t̂_c].
    pub min_w: f64,
    /// w′(t̂_c) − I_p(t̂_c) w(t̂_c), zero at an exact root.
    pub boundary_residual: f64,
    pub n_nodes: usize,
}

/// Compares the numeric eigenfunction with the ODE solution, both normalized in L²(H_p).
pub fn eigenfunction_ode_check(
    result: &CriticalTimeResult,
    h: &HazardModel,
) -> Result<EigenfunctionReport, SpectralError> {
    let t_end = result.t_hat_c;
    let interior: Vec<f64> = result.nodes.iter().copied().filter(|&s| s < t_end).collect();
    let mut times = interior.clone();
    times.push(t_end);
    let rows = solve_eigenfunction_ode(h.distribution(), &times)?;
    let last = rows.last().expect("t_end row");
    let surv = h.survival_at_lambda(last[0]);
    let norm = (last[3] + last[1] * last[1] * surv).sqrt();
    let mut max_gap: f64 = 0.0;
    let mut min_w = f64::INFINITY;
    for (i, &phi) in result.eigenfunction.iter().enumerate() {
        let row = if i < interior.len() { &rows[i] } else { last };
        max_gap = max_gap.max((phi - row[1] / norm).abs());
        if i < interior.len() {
            min_w = min_w.min(row[1]);
        }
    }
    Ok(EigenfunctionReport { max_gap, min_w, boundary_residual: last[2] - surv * last[1], n_nodes: result.nodes.len() })
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchingReport {
    pub mu_t: f64,
    pub mu_b: f64,
    /// |μ_B − μ_T| / μ_T.
    pub rel_gap: f64,
    /// max |H_p − E_p f_p/λ_p| / H_p over the nodes.
    pub identity_max_rel_err: f64,
    /// min ρ_p = λ_p f_p/E_p over the nodes.
    pub rho_min: f64,
    pub n_nodes: usize,
}

/// z_{p,k} = e^{−λ} λ^k/k! p_{k+1}, f_p = λ′ Σ_{k≥1} z_k, E_p = Σ k z_k / Σ_{k≥1} z_k.
pub fn branching_factors(p: &DegreeDistribution, lambda: f64, lambda_prime: f64) -> (f64, f64) {
    let mut term = (-lambda).exp();
    let (mut s0, mut s1) = (0.0, 0.0);
    for k in 1..p.delta() {
        term *= lambda / k as f64;
        let z = term * p.p(k + 1);
        s0 += z;
        s1 += k as f64 * z;
    }
    (lambda_prime * s0, s1 / s0)
}

/// Leading eigenvalue of a positive operator v ↦ pre ∘ K(post ∘ v) by power iteration.
fn perron(nodes: &[f64], pre: &[f64], post: &[f64]) -> f64 {
    let n = nodes.len();
    let mut v = vec![1.0; n];
    let mut mu = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let x: Vec<f64> = v.iter().zip(post).map(|(a, b)| a * b).collect();
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + x[i];
        }
        let mut low = 0.0;
        let mut y = vec![0.0; n];
        for i in 0..n {
            low += nodes[i] * x[i];
            y[i] = pre[i] * (low + nodes[i] * suffix[i + 1]);
        }
        let next_mu = y.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|a| a * a).sum::<f64>();
        let ny = norm(&y);
        v = y.into_iter().map(|a| a / ny).collect();
        if (next_mu - mu).abs() <= 1e-15 * next_mu {
            return next_mu;
        }
        mu = next_mu;
    }
    mu
}

/// Discretizes the branching kernel B and T on a shared node set over [0, t_tail]
/// (no lumping, so the comparison involves no similarity assumption) and compares
/// their leading eigenvalues.
pub fn branching_kernel_check(h: &HazardModel, t_hat: f64, n_nodes: usize) -> Result<BranchingReport, SpectralError> {
    if !(t_hat > 0.0) {
        return Err(SpectralError::InvalidArgument(format!("t_hat = {t_hat}")));
    }
    if t_hat > h.t_max() {
        return Err(SpectralError::HorizonTooSmall { t_hat, t_max: h.t_max() });
    }
    let t_tail = h.t_max().min(8.0 * t_hat + 8.0);
    let panels = n_nodes.div_ceil(PANEL_POINTS);
    let (mut nodes, mut qw) = composite_rule(0.0, t_hat, panels, true);
    if t_tail > t_hat {
        let (tn, tw) = composite_rule(t_hat, t_tail, panels.div_ceil(2), true);
        nodes.extend(tn);
        qw.extend(tw);
    }
    let p = h.distribution();
    let n = nodes.len();
    let (mut pre_b, mut post_b, mut post_t) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut identity: f64 = 0.0;
    let mut rho_min = f64::INFINITY;
    for i in 0..n {
        let lam = h.table().lambda(nodes[i])?;
        if lam == 0.0 {
            return Err(SpectralError::SingularAtZero);
        }
        let lp = h.table().polynomials().lambda_prime(lam);
        let (f, e) = branching_factors(p, lam, lp);
        let hz = h.table().polynomials().hazard(lam);
        identity = identity.max((hz - e * f / lam).abs() / hz);
        rho_min = rho_min.min(lam * f / e);
        pre_b[i] = e / lam;
        post_b[i] = f * qw[i];
        post_t[i] = hz * qw[i];
    }
    // min(t̂, t, s) for nodes beyond t̂
    let clipped: Vec<f64> = nodes.iter().map(|&s| s.min(t_hat)).collect();
    let ones = vec![1.0; n];
    let mu_t = perron(&clipped, &ones, &post_t);
    let mu_b = perron(&clipped, &pre_b, &post_b);
    Ok(BranchingReport {
        mu_t,
        mu_b,
        rel_gap: (mu_b - mu_t).abs() / mu_t,
        identity_max_rel_err: identity,
        rho_min,
        n_nodes: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chi(d: usize) -> DegreeDistribution {
        DegreeDistribution::regular(d).unwrap()
    }

    fn hazard(p: &DegreeDistribution, t_max: f64) -> HazardModel {
        HazardModel::build(p, t_max, 1e-10).unwrap()
    }

    #[test]
    fn weights_cover_unit_mass() {
        let h = hazard(&chi(3), 50.0);
        for &t in &[0.3, 1.0, 20.0] {
            let op = discretize(&h, THat::Finite(t), 400).unwrap();
            assert!((op.weight_sum() - 1.0).abs() < 1e-12, "t̂={t}: {}", op.weight_sum());
            assert!(op.weights().iter().all(|&w| w >= 0.0));
        }
        let op = discretize(&h, THat::Infinite, 64).unwrap();
        assert!(op.truncation_note().is_some());
        assert!((op.weight_sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn horizon_and_size_errors() {
        let h = hazard(&chi(3), 5.0);
        assert!(matches!(discretize(&h, THat::Finite(6.0), 64), Err(SpectralError::HorizonTooSmall { .. })));
        assert!(matches!(discretize(&h, THat::Finite(1.0), 8), Err(SpectralError::InvalidArgument(_))));
    }

    #[test]
    fn matrix_symmetric_and_apply_consistent() {
        let h = hazard(&chi(3), 5.0);
        let op = discretize(&h, THat::Finite(1.0), 64).unwrap();
        let m = op.matrix();
        assert_eq!(m, m.transpose());
        let v: Vec<f64> = (0..op.len()).map(|i| 1.0 + (i as f64).sin()).collect();
        let fast = op.apply(&v);
        let dense = &m * nalgebra::DVector::from_vec(v);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn zero_t_hat_has_zero_eigenvalue() {
        let h = hazard(&chi(3), 5.0);
        let op = discretize(&h, THat::Finite(0.0), 64).unwrap();
        assert_eq!(principal_eigenvalue(&op, 1e-10).unwrap().mu, 0.0);
    }

    #[test]
    fn power_matches_dense() {
        let h = hazard(&"2:0.5,4:0.5".parse().unwrap(), 20.0);
        let op = discretize(&h, THat::Finite(3.0), 96).unwrap();
        let a = power_iteration(&op, 1e-12).unwrap();
        let b = dense_principal(&op);
        assert!((a.mu - b.mu).abs() < 1e-12 * b.mu);
        assert!(a.is_strictly_positive() && b.is_strictly_positive());
        assert!(a.residual <= 1e-12 * a.mu);
    }

    #[test]
    fn mu_increasing_and_chi2_subcritical() {
        let h3 = hazard(&chi(3), 10.0);
        let tr = eigenvalue_trace(&h3, &[1.0, 2.0], 200, 1e-12).unwrap();
        assert!(tr[0].1 < tr[1].1);
        let h2 = hazard(&chi(2), 1e4);
        for &t in &[10.0, 1e3, 1e4] {
            let op = discretize(&h2, THat::Finite(t), 400).unwrap();
            assert!(principal_eigenvalue(&op, 1e-12).unwrap().mu < 1.0);
        }
    }

    #[test]
    fn doubling_nodes_is_stable_for_chi3() {
        let h = hazard(&chi(3), 5.0);
        let mu = |n| principal_eigenvalue(&discretize(&h, THat::Finite(1.0), n).unwrap(), 1e-13).unwrap().mu;
        let (a, b) = (mu(400), mu(800));
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn degenerate_input() {
        assert_eq!(
            critical_time_hat(&chi(2), &SpectralOptions::default()).unwrap_err(),
            SpectralError::DegenerateRegular
        );
        let d = critical_time_discrete(&chi(2), &SpectralOptions::default()).unwrap();
        assert!(d.degenerate && d.t_c == 1.0);
    }

    #[test]
    fn bracket_failure_reports_cap() {
        let opts = SpectralOptions { cap: 5.0, ..SpectralOptions::default() };
        let p: DegreeDistribution = "2:0.999,3:0.001".parse().unwrap();
        assert!(matches!(critical_time_hat(&p, &opts), Err(SpectralError::BracketFailure { cap, .. }) if cap == 5.0));
    }

    #[test]
    fn branching_similarity() {
        let h = hazard(&chi(3), 20.0);
        let r = branching_kernel_check(&h, 1.0, 200).unwrap();
        assert!(r.rel_gap < 1e-12, "{r:?}");
        assert!(r.identity_max_rel_err < 1e-12);
        assert!(r.rho_min > 0.0);
    }
}
