//! First-order corrections around the 2-regular law in a direction r, and grid checks of
//! the inequalities that sandwich t̂_c between t̲ = (1−δ)/(εΥ_r) and t̄ = (1+δ)/(εΥ_r).
//!
//! Every χ₂-base quantity (Λ_r, H_r, I_r, u, α_r, β_r, ω_r) is a function of λ = λ(t),
//! so it is evaluated in the λ variable (ds = dλ/λ′) with running Gauss-Legendre
//! integrals. Time-domain ODE integrations are kept as independent cross-checks.

use std::sync::{Arc, OnceLock};

use serde::Serialize;
use thiserror::Error;

use crate::distributions::{DegreeDistribution, DistError, EpsilonDirection};
use crate::lambda_solver::{HazardModel, LambdaError, LambdaTable};
use crate::numeric::{gl16, poisson_sum, Cumulative, Dopri5, OdeError};

/// Points of the geometric verification grid (t = 0 is added separately).
pub const GRID_POINTS: usize = 2000;
pub const GRID_START: f64 = 1e-3;
const LAMBDA_PANEL: f64 = 1.0 / 32.0;
const SERIES_SWITCH: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("delta = {0} is outside (0, 1)")]
    InvalidDelta(f64),
    #[error("finite differences are not first order: error ratio {error_ratio} against step ratio {step_ratio} between eps = {eps0} and {eps1}")]
    ConvergenceOrderViolation { eps0: f64, eps1: f64, error_ratio: f64, step_ratio: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Lambda(#[from] LambdaError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Every first-order quantity at one time point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorrectionState {
    pub t: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
    /// Λ_r
    pub lam_r: f64,
    /// Λ′_r (time derivative)
    pub lam_r_prime: f64,
    pub h_r: f64,
    pub i_r: f64,
    pub u: f64,
    pub u_prime: f64,
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub omega_prime: f64,
}

/// χ₂-base corrections as functions of λ for a fixed direction.
struct Corrections {
    /// S(x) = Σ_{k≥2} x^k/k! s_{k+1}
    cs: Vec<f64>,
    /// R(x) = Σ_{k≥0} x^k/k! r_{k+2}
    cr: Vec<f64>,
    /// J(x) = Σ_{k≥1} x^k/k! s_{k+2}
    cj: Vec<f64>,
    g: Cumulative,
    l: Cumulative,
    alpha: Cumulative,
    beta: Cumulative,
}

fn lp2(y: f64) -> f64 {
    (-y).exp() * (1.0 + y)
}

/// (1 − e^y/(1+y))/y², with its series near 0.
fn l_integrand(y: f64) -> f64 {
    if y < SERIES_SWITCH {
        -0.5 + y / 3.0 - 3.0 * y * y / 8.0
    } else {
        -(y.exp_m1() - y) / ((1.0 + y) * y * y)
    }
}

/// (λ′ − 1)/λ for χ₂, with its series near 0.
fn lp_minus_one_over(y: f64) -> f64 {
    if y < SERIES_SWITCH {
        y * (-0.5 + y * (1.0 / 3.0 - y / 8.0))
    } else {
        -(-y).exp() * (y.exp_m1() - y) / y
    }
}

/// Pieces of the state that do not need α, β.
#[derive(Clone, Copy)]
struct Inner {
    lp: f64,
    lam_r: f64,
    lam_r_prime: f64,
    h_r: f64,
    i_r: f64,
    u: f64,
    u_prime: f64,
}

impl Corrections {
    fn new(ed: &EpsilonDirection, y_max: f64) -> Arc<Self> {
        let dir = &ed.direction;
        let delta = dir.delta();
        let cs: Vec<f64> = (0..delta).map(|k| if k >= 2 { dir.s(k + 1) } else { 0.0 }).collect();
        let cr: Vec<f64> = (0..delta - 1).map(|k| dir.r(k + 2)).collect();
        let cj: Vec<f64> = (0..delta - 1).map(|k| if k >= 1 { dir.s(k + 2) } else { 0.0 }).collect();
        let upper = (y_max / LAMBDA_PANEL).ceil() * LAMBDA_PANEL + LAMBDA_PANEL;
        let cs_g = cs.clone();
        let g = Cumulative::new(
            Arc::new(move |x: f64| x.exp() / ((1.0 + x) * (1.0 + x)) * poisson_sum(x, &cs_g)),
            upper,
            LAMBDA_PANEL,
        );
        let l = Cumulative::new(Arc::new(l_integrand), upper, LAMBDA_PANEL);
        let base = Arc::new(Corrections {
            cs: cs.clone(),
            cr: cr.clone(),
            cj: cj.clone(),
            g: g.clone(),
            l: l.clone(),
            alpha: Cumulative::new(Arc::new(|_| 0.0), 0.0, 1.0),
            beta: Cumulative::new(Arc::new(|_| 0.0), 0.0, 1.0),
        });
        let b1 = Arc::clone(&base);
        let alpha = Cumulative::new(
            Arc::new(move |x: f64| {
                let s = b1.inner(x);
                -s.u * s.h_r * x / s.lp
            }),
            upper,
            LAMBDA_PANEL,
        );
        let b2 = Arc::clone(&base);
        let beta = Cumulative::new(
            Arc::new(move |x: f64| {
                let s = b2.inner(x);
                s.h_r * x * x / s.lp
            }),
            upper,
            LAMBDA_PANEL,
        );
        Arc::new(Corrections { cs, cr, cj, g, l, alpha, beta })
    }

    fn inner(&self, y: f64) -> Inner {
        let e = (-y).exp();
        let lp = lp2(y);
        let lam_r = lp * self.g.eval(y);
        let lam_r_prime = e * (-y * lam_r + poisson_sum(y, &self.cs));
        let h_r = e * (lam_r_prime - lp * lam_r + lp * poisson_sum(y, &self.cr));
        let i_r = e * (-lam_r + poisson_sum(y, &self.cj));
        let lv = self.l.eval(y);
        Inner { lp, lam_r, lam_r_prime, h_r, i_r, u: 1.0 + y * lv, u_prime: lp * lv + lp_minus_one_over(y) }
    }

    fn state(&self, t: f64, y: f64) -> CorrectionState {
        let s = self.inner(y);
        let alpha = self.alpha.eval(y);
        let beta = self.beta.eval(y);
        CorrectionState {
            t,
            lambda: y,
            lambda_prime: s.lp,
            lam_r: s.lam_r,
            lam_r_prime: s.lam_r_prime,
            h_r: s.h_r,
            i_r: s.i_r,
            u: s.u,
            u_prime: s.u_prime,
            alpha,
            beta,
            omega: alpha * y + beta * s.u,
            omega_prime: alpha * s.lp + beta * s.u_prime,
        }
    }

    /// ½ Σ_{k≥1} λ^k/k! s_{k+2}, the upper bound on Λ_r.
    fn lam_r_bound(&self, y: f64) -> f64 {
        0.5 * poisson_sum(y, &self.cj)
    }
}

/// Corrections, squeeze functions and test functions for one (ε, r, δ).
pub struct PerturbationBundle {
    dir: EpsilonDirection,
    delta: f64,
    base: Arc<LambdaTable>,
    corr: Arc<Corrections>,
    t_under: f64,
    t_over: f64,
    t_over_one: f64,
    matched: OnceLock<Result<HazardModel, LambdaError>>,
}

impl std::fmt::Debug for PerturbationBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbationBundle")
            .field("dir", &self.dir)
            .field("delta", &self.delta)
            .field("t_under", &self.t_under)
            .field("t_over", &self.t_over)
            .finish()
    }
}

impl PerturbationBundle {
    /// Horizon defaults to t̄_{p,1} = 2/(εΥ_r).
    pub fn new(dir: EpsilonDirection, delta: f64) -> Result<Self, PerturbationError> {
        let t1 = 2.0 / (dir.epsilon * dir.molloy_reed_constant());
        Self::with_horizon(dir, delta, t1)
    }

    /// The χ₂ table is built up to max(horizon, t̄_{p,1}).
    pub fn with_horizon(dir: EpsilonDirection, delta: f64, horizon: f64) -> Result<Self, PerturbationError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(PerturbationError::InvalidDelta(delta));
        }
        let ups = dir.molloy_reed_constant();
        let t_under = (1.0 - delta) / (dir.epsilon * ups);
        let t_over = (1.0 + delta) / (dir.epsilon * ups);
        let t_over_one = 2.0 / (dir.epsilon * ups);
        let t_max = horizon.max(t_over_one);
        let base = Arc::new(LambdaTable::build(&DegreeDistribution::regular(2)?, t_max, 1e-10)?);
        let corr = Corrections::new(&dir, base.lambda_max());
        Ok(Self { dir, delta, base, corr, t_under, t_over, t_over_one, matched: OnceLock::new() })
    }

    pub fn direction(&self) -> &EpsilonDirection {
        &self.dir
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.dir.epsilon
    }

    pub fn upsilon(&self) -> f64 {
        self.dir.molloy_reed_constant()
    }

    /// t̲_{p,δ}
    pub fn t_under(&self) -> f64 {
        self.t_under
    }

    /// t̄_{p,δ}
    pub fn t_over(&self) -> f64 {
        self.t_over
    }

    /// t̄_{p,1}
    pub fn t_over_one(&self) -> f64 {
        self.t_over_one
    }

    pub fn t_max(&self) -> f64 {
        self.base.t_max()
    }

    pub fn base_table(&self) -> &LambdaTable {
        &self.base
    }

    /// Hazard model of p(ε, r) on the bundle horizon, built once.
    pub fn matched_hazard(&self) -> Result<&HazardModel, PerturbationError> {
        let r = self.matched.get_or_init(|| {
            let p = self.dir.distribution().map_err(|e| LambdaError::InvalidArgument(e.to_string()))?;
            HazardModel::build(&p, self.t_max(), 1e-10)
        });
        r.as_ref().map_err(|e| e.clone().into())
    }

    pub fn state(&self, t: f64) -> Result<CorrectionState, PerturbationError> {
        let y = self.base.lambda(t)?;
        Ok(self.corr.state(t, y))
    }

    /// Λ_r(t) = λ′(t) ∫₀^{λ(t)} eˣ/(1+x)² Σ_k x^k/k! s_{k+1} dx.
    pub fn lambda_correction(&self, t: f64) -> Result<f64, PerturbationError> {
        let y = self.base.lambda(t)?;
        Ok(self.corr.inner(y).lam_r)
    }

    pub fn lambda_correction_bound(&self, t: f64) -> Result<f64, PerturbationError> {
        Ok(self.corr.lam_r_bound(self.base.lambda(t)?))
    }

    pub fn hazard_correction(&self, t: f64) -> Result<f64, PerturbationError> {
        Ok(self.corr.inner(self.base.lambda(t)?).h_r)
    }

    pub fn survival_correction(&self, t: f64) -> Result<f64, PerturbationError> {
        Ok(self.corr.inner(self.base.lambda(t)?).i_r)
    }

    pub fn omega(&self, t: f64) -> Result<f64, PerturbationError> {
        Ok(self.state(t)?.omega)
    }

    pub fn omega_prime(&self, t: f64) -> Result<f64, PerturbationError> {
        Ok(self.state(t)?.omega_prime)
    }

    /// {0} ∪ 2000 geometric points on [10⁻³, t̄_{p,1}].
    pub fn grid(&self) -> Vec<f64> {
        geometric_grid(GRID_START, self.t_over_one, GRID_POINTS)
    }

    /// (λ, Λ_r) from the time-domain ODEs, at ascending times.
    pub fn lambda_correction_ode(&self, times: &[f64]) -> Result<Vec<(f64, f64)>, PerturbationError> {
        let cs = self.corr.cs.clone();
        let solver = Dopri5::with_tol(1e-13, 1e-25);
        let rows = solver.solve(
            |_, y, d| {
                let e = (-y[0]).exp();
                d[0] = e * (1.0 + y[0]);
                d[1] = e * (-y[0] * y[1] + poisson_sum(y[0], &cs));
            },
            0.0,
            &[0.0, 0.0],
            times,
        )?;
        Ok(rows.into_iter().map(|r| (r[0], r[1])).collect())
    }

    /// (ω, ω′) from ω″ = −H ω − H_r λ, ω(0) = ω′(0) = 0, integrated with λ and Λ_r.
    pub fn omega_ode(&self, times: &[f64]) -> Result<Vec<(f64, f64)>, PerturbationError> {
        let cs = self.corr.cs.clone();
        let cr = self.corr.cr.clone();
        let solver = Dopri5::with_tol(1e-13, 1e-30);
        let rows = solver.solve(
            |_, y, d| {
                let e = (-y[0]).exp();
                let lp = e * (1.0 + y[0]);
                let lam_r_prime = e * (-y[0] * y[1] + poisson_sum(y[0], &cs));
                let h = lp * e;
                let h_r = e * (lam_r_prime - lp * y[1] + lp * poisson_sum(y[0], &cr));
                d[0] = lp;
                d[1] = lam_r_prime;
                d[2] = y[3];
                d[3] = -h * y[2] - h_r * y[0];
            },
            0.0,
            &[0.0, 0.0, 0.0, 0.0],
            times,
        )?;
        Ok(rows.into_iter().map(|r| (r[2], r[3])).collect())
    }

    pub fn test_functions(&self) -> TestFunctions<'_> {
        TestFunctions { bundle: self }
    }

    /// Last sign change of H_r on the grid (the empirical θ beyond which H_r > 0).
    pub fn hazard_correction_sign_change(&self) -> Result<Option<f64>, PerturbationError> {
        let mut last = None;
        let mut prev: Option<(f64, f64)> = None;
        for t in self.grid() {
            let v = self.hazard_correction(t)?;
            if let Some((pt, pv)) = prev {
                if (pv < 0.0) != (v < 0.0) {
                    last = Some(0.5 * (pt + t));
                }
            }
            prev = Some((t, v));
        }
        Ok(last)
    }
}

/// `n` points geometric on [a, b], preceded by 0.
pub fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(n + 1);
    g.push(0.0);
    let ratio = (b / a).ln() / (n - 1) as f64;
    for i in 0..n {
        g.push(a * (ratio * i as f64).exp());
    }
    g[n] = b;
    g
}

/// Which side of the sandwich a test function certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Under,
    Over,
}

/// w̲ = λ + (1+δ/2)εω on [0, t̲] and w̄ = λ + (1−δ/2)εω on [0, t̄], constant afterwards.
pub struct TestFunctions<'a> {
    bundle: &'a PerturbationBundle,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub side: Side,
    pub nonnegative: bool,
    pub monotone: bool,
    pub first_violation: Option<f64>,
}

impl TestFunctions<'_> {
    pub fn coefficient(&self, side: Side) -> f64 {
        let d = self.bundle.delta;
        match side {
            Side::Under => 1.0 + d / 2.0,
            Side::Over => 1.0 - d / 2.0,
        }
    }

    pub fn end(&self, side: Side) -> f64 {
        match side {
            Side::Under => self.bundle.t_under,
            Side::Over => self.bundle.t_over,
        }
    }

    fn at_state(&self, side: Side, s: &CorrectionState) -> (f64, f64) {
        let c = self.coefficient(side) * self.bundle.epsilon();
        (s.lambda + c * s.omega, s.lambda_prime + c * s.omega_prime)
    }

    /// w(t).
    pub fn value(&self, side: Side, t: f64) -> Result<f64, PerturbationError> {
        let s = self.bundle.state(t.min(self.end(side)))?;
        Ok(self.at_state(side, &s).0)
    }

    /// w′(t), zero past the end point (left derivative at the end point).
    pub fn derivative(&self, side: Side, t: f64) -> Result<f64, PerturbationError> {
        if t > self.end(side) {
            return Ok(0.0);
        }
        Ok(self.at_state(side, &self.bundle.state(t)?).1)
    }

    /// Scans the grid for negative values and decreasing steps.
    pub fn monotonicity(&self, side: Side) -> Result<MonotonicityReport, PerturbationError> {
        let mut prev = 0.0;
        let mut nonnegative = true;
        let mut first_violation = None;
        for t in self.bundle.grid() {
            let w = self.value(side, t)?;
            if w < 0.0 {
                nonnegative = false;
                first_violation.get_or_insert(t);
            }
            if w < prev {
                first_violation.get_or_insert(t);
            }
            prev = w;
        }
        Ok(MonotonicityReport { side, nonnegative, monotone: first_violation.is_none(), first_violation })
    }
}

/// Slack for comparisons that hold with equality at t = 0.
fn slack(scale: f64) -> f64 {
    64.0 * f64::EPSILON * scale.abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct SqueezeReport {
    pub holds: bool,
    /// min over the grid of (value − lower bound)
    pub min_lower_margin: f64,
    /// min over the grid of (upper bound − value)
    pub min_upper_margin: f64,
    /// Both surrogate survival functions decrease on the grid (survival squeeze only).
    pub bounds_monotone: bool,
    pub first_violation: Option<f64>,
    pub rows: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeReport {
    pub holds: bool,
    /// min over the grid of λ′ − εK̄|ω′_r|
    pub min_margin: f64,
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorReport {
    /// max over the grid of (T w̲)(t) − w̲(t); must be ≤ 0
    pub under_max_gap: f64,
    /// min over the grid of (T w̄)(t) − w̄(t); must be ≥ 0
    pub over_min_gap: f64,
    pub under_holds: bool,
    pub over_holds: bool,
    /// (t, T w̲, w̲) rows
    pub under_rows: Vec<[f64; 3]>,
    /// (t, T w̄, w̄) rows
    pub over_rows: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DifferenceReport {
    /// min of φ̲ on [0, t̲]; must be ≥ 0
    pub under_min: f64,
    /// max of φ̄ on [0, t̄]; must be ≤ 0
    pub over_max: f64,
    pub under_holds: bool,
    pub over_holds: bool,
    /// min over t of ∫_t^{t̲} (λ + εKω_r) H_r with K = −(1+δ/2)(1+δ/3)/(δ/6)
    pub aux_under_min: f64,
    /// min over t of ∫_t^{t̄} (λ + εKω_r) H_r with K = (1−δ/2)(1−δ/3)/(δ/6)
    pub aux_over_min: f64,
    pub aux_holds: bool,
    /// φ̲(t̲) e^{λ(t̲)} and its small-ε limit δ/2 + δ²/2
    pub under_endpoint_scaled: f64,
    pub under_endpoint_limit: f64,
    /// φ̄(t̄) e^{λ(t̄)} and its small-ε limit −δ/2 + δ²/2
    pub over_endpoint_scaled: f64,
    pub over_endpoint_limit: f64,
    /// (t, φ̲) and (t, φ̄) rows
    pub under_rows: Vec<[f64; 2]>,
    pub over_rows: Vec<[f64; 2]>,
}

/// Per-interval quadrature data on a sorted grid, cut at `end`.
struct Sweep {
    grid: Vec<f64>,
    /// GL nodes per interval i ∈ [grid[i], grid[i+1]]
    nodes: Vec<Vec<(f64, f64)>>,
}

impl Sweep {
    fn new(mut grid: Vec<f64>, end: f64) -> Self {
        grid.retain(|&t| t < end);
        grid.push(end);
        let nodes = grid.windows(2).map(|w| gl16().mapped(w[0], w[1]).collect()).collect();
        Self { grid, nodes }
    }

    /// Σ over intervals of ∫ f, returned as running integrals from 0 at each grid point.
    fn running(&self, vals: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for i in 0..self.nodes.len() {
            let piece: f64 = self.nodes[i].iter().zip(&vals[i]).map(|((_, w), v)| w * v).sum();
            out[i + 1] = out[i] + piece;
        }
        out
    }

    /// ∫_{t_i}^{end} f, accumulated from the right.
    fn remaining(&self, vals: &[Vec<f64>]) -> Vec<f64> {
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for i in (0..self.nodes.len()).rev() {
            let piece: f64 = self.nodes[i].iter().zip(&vals[i]).map(|((_, w), v)| w * v).sum();
            out[i] = out[i + 1] + piece;
        }
        out
    }

    fn map<F: FnMut(f64) -> Result<f64, PerturbationError>>(
        &self,
        mut f: F,
    ) -> Result<Vec<Vec<f64>>, PerturbationError> {
        self.nodes.iter().map(|iv| iv.iter().map(|&(x, _)| f(x)).collect()).collect()
    }
}

impl PerturbationBundle {
    /// λ̲_δ ≤ λ_p ≤ λ̄_δ with λ̲/λ̄ = λ + (1 ∓ δ)εΛ_r, on the grid.
    pub fn verify_lambda_squeeze(&self, h: &HazardModel) -> Result<SqueezeReport, PerturbationError> {
        let (eps, d) = (self.epsilon(), self.delta);
        let mut rep = SqueezeReport::empty();
        for t in self.grid() {
            let s = self.state(t)?;
            let lp = h.table().lambda(t)?;
            let lo = s.lambda + (1.0 - d) * eps * s.lam_r;
            let hi = s.lambda + (1.0 + d) * eps * s.lam_r;
            rep.record(t, lo, lp, hi);
        }
        rep.bounds_monotone = true;
        Ok(rep)
    }

    /// I̲_δ ≤ I_p ≤ Ī_δ with I̲/Ī = I + (1 ∓ δ)εI_r, plus monotone decrease of both bounds.
    pub fn verify_survival_squeeze(&self, h: &HazardModel) -> Result<SqueezeReport, PerturbationError> {
        let (eps, d) = (self.epsilon(), self.delta);
        let mut rep = SqueezeReport::empty();
        let (mut plo, mut phi) = (f64::INFINITY, f64::INFINITY);
        let mut monotone = true;
        for t in self.grid() {
            let s = self.state(t)?;
            let ip = h.survival(t)?;
            let base = (-s.lambda).exp();
            let lo = base + (1.0 - d) * eps * s.i_r;
            let hi = base + (1.0 + d) * eps * s.i_r;
            rep.record(t, lo, ip, hi);
            if lo > plo || hi > phi {
                monotone = false;
            }
            plo = lo;
            phi = hi;
        }
        rep.bounds_monotone = monotone;
        rep.holds &= monotone;
        Ok(rep)
    }

    /// εK̄|ω′_r(t)| ≤ λ′(t) on the grid.
    pub fn verify_slope_bound(&self, k_bar: f64) -> Result<SlopeReport, PerturbationError> {
        if !(k_bar > 0.0) {
            return Err(PerturbationError::InvalidArgument(format!("K = {k_bar}")));
        }
        let mut min_margin = f64::INFINITY;
        let mut first_violation = None;
        for t in self.grid() {
            let s = self.state(t)?;
            let m = s.lambda_prime - self.epsilon() * k_bar * s.omega_prime.abs();
            min_margin = min_margin.min(m);
            if m < 0.0 {
                first_violation.get_or_insert(t);
            }
        }
        Ok(SlopeReport { holds: first_violation.is_none(), min_margin, first_violation })
    }

    /// (T_{p,t̲} w̲) ≤ w̲ and (T_{p,t̄} w̄) ≥ w̄ on the grid, with T integrated against H_p.
    pub fn verify_operator_inequalities(&self, h: &HazardModel) -> Result<OperatorReport, PerturbationError> {
        let (under_max_gap, under_rows) = self.operator_side(h, Side::Under)?;
        let (over_min_gap, over_rows) = self.operator_side(h, Side::Over)?;
        let under_scale = under_rows.iter().map(|r| r[2].abs()).fold(0.0, f64::max);
        let over_scale = over_rows.iter().map(|r| r[2].abs()).fold(0.0, f64::max);
        Ok(OperatorReport {
            under_max_gap,
            over_min_gap,
            under_holds: under_max_gap <= slack(under_scale),
            over_holds: over_min_gap >= -slack(over_scale),
            under_rows,
            over_rows,
        })
    }

    fn operator_side(&self, h: &HazardModel, side: Side) -> Result<(f64, Vec<[f64; 3]>), PerturbationError> {
        let tf = self.test_functions();
        let end = tf.end(side);
        let sweep = Sweep::new(self.grid(), end);
        let hw = sweep.map(|s| Ok(h.hazard_density(s)? * tf.value(side, s)?))?;
        let hws: Vec<Vec<f64>> =
            hw.iter().zip(&sweep.nodes).map(|(v, iv)| v.iter().zip(iv).map(|(a, (x, _))| a * x).collect()).collect();
        let low = sweep.running(&hws);
        let high = sweep.remaining(&hw);
        let w_end = tf.value(side, end)?;
        let atom = w_end * h.survival(end)?;
        let mut rows = Vec::new();
        let mut extreme = match side {
            Side::Under => f64::NEG_INFINITY,
            Side::Over => f64::INFINITY,
        };
        for t in self.grid() {
            let tc = t.min(end);
            let (tw, w) = if tc == end {
                (low[sweep.grid.len() - 1] + end * atom, w_end)
            } else {
                let i = sweep.grid.partition_point(|&g| g < tc);
                debug_assert_eq!(sweep.grid[i], tc);
                (low[i] + tc * (high[i] + atom), tf.value(side, tc)?)
            };
            let gap = tw - w;
            if t == 0.0 {
                rows.push([t, tw, w]);
                continue;
            }
            extreme = match side {
                Side::Under => extreme.max(gap),
                Side::Over => extreme.min(gap),
            };
            rows.push([t, tw, w]);
        }
        Ok((extreme, rows))
    }

    /// Sign conditions on the difference functions φ̲ (≥ 0 on [0, t̲]) and φ̄ (≤ 0 on
    /// [0, t̄]), via integration by parts against the explicit surrogate survival
    /// functions Ī_{δ/3} and I̲_{δ/3}, plus the auxiliary integral conditions.
    pub fn verify_difference_functions(&self) -> Result<DifferenceReport, PerturbationError> {
        let d = self.delta;
        let (under_rows, under_min, under_end) = self.difference_side(Side::Under)?;
        let (over_rows, over_max, over_end) = self.difference_side(Side::Over)?;
        let k_under = -(1.0 + d / 2.0) * (1.0 + d / 3.0) / (d / 6.0);
        let k_over = (1.0 - d / 2.0) * (1.0 - d / 3.0) / (d / 6.0);
        let aux_under_min = self.aux_integral_min(self.t_under, k_under)?;
        let aux_over_min = self.aux_integral_min(self.t_over, k_over)?;
        let aux_tol = 1e-14;
        Ok(DifferenceReport {
            under_min,
            over_max,
            under_holds: under_min >= 0.0,
            over_holds: over_max <= 0.0,
            aux_under_min,
            aux_over_min,
            aux_holds: aux_under_min >= -aux_tol && aux_over_min >= -aux_tol,
            under_endpoint_scaled: under_end,
            under_endpoint_limit: d / 2.0 + d * d / 2.0,
            over_endpoint_scaled: over_end,
            over_endpoint_limit: -d / 2.0 + d * d / 2.0,
            under_rows,
            over_rows,
        })
    }

    /// φ(t) = w′(t) − w(t) J(t) − ∫_t^{end} w′ J with J the surrogate survival function.
    fn difference_side(&self, side: Side) -> Result<(Vec<[f64; 2]>, f64, f64), PerturbationError> {
        let tf = self.test_functions();
        let end = tf.end(side);
        let c = match side {
            Side::Under => 1.0 + self.delta / 3.0,
            Side::Over => 1.0 - self.delta / 3.0,
        };
        let eps = self.epsilon();
        let surv = |s: &CorrectionState| (-s.lambda).exp() + c * eps * s.i_r;
        let sweep = Sweep::new(self.grid(), end);
        let vals = sweep.map(|x| {
            let s = self.state(x)?;
            Ok(tf.at_state(side, &s).1 * surv(&s))
        })?;
        let rem = sweep.remaining(&vals);
        let mut rows = Vec::with_capacity(sweep.grid.len());
        let mut extreme = match side {
            Side::Under => f64::INFINITY,
            Side::Over => f64::NEG_INFINITY,
        };
        let mut endpoint = 0.0;
        for (i, &t) in sweep.grid.iter().enumerate() {
            let s = self.state(t)?;
            let (w, wp) = tf.at_state(side, &s);
            let phi = wp - w * surv(&s) - rem[i];
            extreme = match side {
                Side::Under => extreme.min(phi),
                Side::Over => extreme.max(phi),
            };
            if i + 1 == sweep.grid.len() {
                endpoint = phi * s.lambda.exp();
            }
            rows.push([t, phi]);
        }
        Ok((rows, extreme, endpoint))
    }

    fn aux_integral_min(&self, end: f64, k: f64) -> Result<f64, PerturbationError> {
        let eps = self.epsilon();
        let sweep = Sweep::new(self.grid(), end);
        let vals = sweep.map(|x| {
            let s = self.state(x)?;
            Ok((s.lambda + eps * k * s.omega) * s.h_r)
        })?;
        let rem = sweep.remaining(&vals);
        Ok(rem.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Limit ratios at a large time for the χ₂ base.
    pub fn asymptotic_ratios(&self, t: f64) -> Result<AsymptoticRatios, PerturbationError> {
        let s = self.state(t)?;
        let ln = t.ln();
        let ups = self.upsilon();
        let h2 = HazardModel::from_shared(Arc::clone(&self.base));
        Ok(AsymptoticRatios {
            t,
            lambda_over_log: s.lambda / ln,
            exp_lambda_over_t_log: s.lambda.exp() / (t * ln),
            u_ratio: -s.u * ln / t,
            omega_ratio: -s.omega * ln / (ups * t),
            omega_prime_ratio: -s.omega_prime * ln / ups,
            beta: s.beta,
            tail_ratio: t * h2.mean_root_degree_tail(t)?,
            aux_ratio: (s.omega - s.lambda.exp() * s.omega_prime) / (ups * t),
        })
    }
}

impl SqueezeReport {
    fn empty() -> Self {
        Self {
            holds: true,
            min_lower_margin: f64::INFINITY,
            min_upper_margin: f64::INFINITY,
            bounds_monotone: true,
            first_violation: None,
            rows: Vec::new(),
        }
    }

    fn record(&mut self, t: f64, lo: f64, v: f64, hi: f64) {
        let (a, b) = (v - lo, hi - v);
        if t > 0.0 {
            self.min_lower_margin = self.min_lower_margin.min(a);
            self.min_upper_margin = self.min_upper_margin.min(b);
        }
        if a < -slack(v) || b < -slack(v) {
            self.holds = false;
            self.first_violation.get_or_insert(t);
        }
        self.rows.push([t, lo, v, hi]);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticRatios {
    pub t: f64,
    /// λ/ln t → 1
    pub lambda_over_log: f64,
    /// e^λ/(t ln t) → 1
    pub exp_lambda_over_t_log: f64,
    /// −u ln t/t → 1
    pub u_ratio: f64,
    /// −ω_r ln t/(Υ_r t) → 1
    pub omega_ratio: f64,
    /// −ω′_r ln t/Υ_r → 1
    pub omega_prime_ratio: f64,
    /// β_r → Υ_r
    pub beta: f64,
    /// t ∫_t^∞ (λ′)² → 1
    pub tail_ratio: f64,
    /// (ω_r − e^λ ω′_r)/(Υ_r t) → 1
    pub aux_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteDifferenceRow {
    pub epsilon: f64,
    /// max_t |(λ_p − λ)/ε − Λ_r|
    pub lambda_error: f64,
    /// max_t |(I_p − I)/ε − I_r|
    pub survival_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteDifferenceReport {
    pub times: Vec<f64>,
    pub rows: Vec<FiniteDifferenceRow>,
}

/// Checks (λ_{p(ε,r)} − λ)/ε → Λ_r and (I_{p(ε,r)} − I)/ε → I_r at first order.
pub fn finite_difference_check(
    dir: &crate::distributions::Direction,
    eps_list: &[f64],
    times: &[f64],
) -> Result<FiniteDifferenceReport, PerturbationError> {
    if eps_list.len() < 2 || eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(PerturbationError::InvalidArgument("eps list must be positive and decreasing".into()));
    }
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let ed = EpsilonDirection::new(eps_list[0], dir.clone())?;
    let bundle = PerturbationBundle::with_horizon(ed, 0.5, t_end)?;
    let base = HazardModel::from_shared(Arc::clone(&bundle.base));
    let mut rows = Vec::new();
    for &eps in eps_list {
        let p = EpsilonDirection::new(eps, dir.clone())?.distribution()?;
        let hp = HazardModel::build(&p, bundle.t_max(), 1e-12)?;
        let (mut le, mut se): (f64, f64) = (0.0, 0.0);
        for &t in times {
            let s = bundle.state(t)?;
            let dl = (hp.table().lambda(t)? - s.lambda) / eps;
            let di = (hp.survival(t)? - base.survival(t)?) / eps;
            le = le.max((dl - s.lam_r).abs());
            se = se.max((di - s.i_r).abs());
        }
        rows.push(FiniteDifferenceRow { epsilon: eps, lambda_error: le, survival_error: se });
    }
    for w in rows.windows(2) {
        let step_ratio = w[0].epsilon / w[1].epsilon;
        for (e0, e1) in [(w[0].lambda_error, w[1].lambda_error), (w[0].survival_error, w[1].survival_error)] {
            let error_ratio = e0 / e1;
            if !(error_ratio >= step_ratio / 3.0 && error_ratio <= step_ratio * 3.0) {
                return Err(PerturbationError::ConvergenceOrderViolation {
                    eps0: w[0].epsilon,
                    eps1: w[1].epsilon,
                    error_ratio,
                    step_ratio,
                });
            }
        }
    }
    Ok(FiniteDifferenceReport { times: times.to_vec(), rows })
}
