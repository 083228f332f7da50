//! The intensity λ_p(t), the offspring-time density H_p, its survival function I_p and
//! the mean root degree F_p.
//!
//! λ_p is obtained by inverting ψ_p(λ) = ∫₀^λ eˣ/P_p(x) dx, tabulated on a λ-grid with
//! composite Gauss-Legendre quadrature. Point evaluations start from a monotone cubic
//! guess and are polished by Newton steps on ψ_p, so the table never extrapolates and
//! the interpolation error does not reach the returned values.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::distributions::{DegreeDistribution, TailVector};
use crate::numeric::{gl16, gl32, poisson_lower_tail, poisson_sum, poisson_upper_tail, Dopri5, OdeError};

/// ψ_p is rejected beyond this λ (e^λ would overflow soon after).
pub const LAMBDA_LIMIT: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LambdaError {
    #[error("t = {t} is outside the table horizon [0, {t_max}]")]
    OutOfRange { t: f64, t_max: f64 },
    #[error("lambda = {lambda} is outside [0, {LAMBDA_LIMIT}]")]
    NonFiniteResult { lambda: f64 },
    #[error("psi inversion and ODE integration disagree by {gap:e} (tolerance {tol:e})")]
    ToleranceUnachievable { gap: f64, tol: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Polynomials in λ built from the tails: P, P′ and the constraint weights.
#[derive(Debug, Clone)]
pub struct TailPolynomials {
    /// q_{k+1}, k = 0..Δ−1
    c0: Vec<f64>,
    /// q_{k+2}, k = 0..Δ−2
    c1: Vec<f64>,
    /// p_{k+2}, k = 0..Δ−2
    cp: Vec<f64>,
}

impl TailPolynomials {
    pub fn new(p: &DegreeDistribution) -> Self {
        let tails = p.tails();
        let delta = p.delta();
        Self {
            c0: (0..delta).map(|k| tails.q(k + 1)).collect(),
            c1: (0..delta - 1).map(|k| tails.q(k + 2)).collect(),
            cp: (0..delta - 1).map(|k| p.p(k + 2)).collect(),
        }
    }

    /// P_p(x) = Σ_{k=0}^{Δ−1} x^k/k! q_{k+1}.
    pub fn p(&self, x: f64) -> f64 {
        poisson_sum(x, &self.c0)
    }

    /// P′_p(x) = Σ_{k=0}^{Δ−2} x^k/k! q_{k+2}.
    pub fn dp(&self, x: f64) -> f64 {
        poisson_sum(x, &self.c1)
    }

    /// Σ_{k=0}^{Δ−2} x^k/k! p_{k+2}.
    pub fn weights(&self, x: f64) -> f64 {
        poisson_sum(x, &self.cp)
    }

    /// γ_p(x) = eˣ/P_p(x) = dψ_p/dλ.
    pub fn gamma(&self, x: f64) -> f64 {
        x.exp() / self.p(x)
    }

    /// λ′ as a function of λ: e^{−λ} P_p(λ), clamped to its exact bound 1 (P_p ≤ eˣ).
    pub fn lambda_prime(&self, lambda: f64) -> f64 {
        ((-lambda).exp() * self.p(lambda)).min(1.0)
    }

    /// Ĩ_p(λ) = e^{−λ} Σ_k λ^k/k! q_{k+2}.
    pub fn survival(&self, lambda: f64) -> f64 {
        (-lambda).exp() * self.dp(lambda)
    }

    /// H_p as a function of λ: λ′ e^{−λ} Σ_k λ^k/k! p_{k+2}.
    pub fn hazard(&self, lambda: f64) -> f64 {
        let e = (-lambda).exp();
        e * self.p(lambda) * e * self.weights(lambda)
    }
}

/// ψ_p(λ) by composite 32-point Gauss-Legendre on unit-width panels.
pub fn psi(p: &DegreeDistribution, lambda: f64) -> Result<f64, LambdaError> {
    if !(0.0..=LAMBDA_LIMIT).contains(&lambda) {
        return Err(LambdaError::NonFiniteResult { lambda });
    }
    let polys = TailPolynomials::new(p);
    let panels = lambda.ceil().max(1.0) as usize;
    let h = lambda / panels as f64;
    Ok((0..panels).map(|j| gl32().integrate(j as f64 * h, (j + 1) as f64 * h, |x| polys.gamma(x))).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaNode {
    pub t: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
}

/// Monotone tabulation of t ↦ λ_p(t) on [0, t_max].
#[derive(Debug, Clone)]
pub struct LambdaTable {
    dist: DegreeDistribution,
    polys: TailPolynomials,
    t_max: f64,
    tol: f64,
    nodes: Vec<LambdaNode>,
    validation_gap: f64,
}

/// Relative growth of consecutive (1 + λ) grid values.
const GRID_RATIO: f64 = 1.02;

impl LambdaTable {
    /// Tabulates λ_p up to `t_max` and cross-checks against an adaptive RK integration.
    pub fn build(p: &DegreeDistribution, t_max: f64, tol: f64) -> Result<Self, LambdaError> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(LambdaError::InvalidArgument(format!("t_max = {t_max}")));
        }
        if !(tol > 0.0) {
            return Err(LambdaError::InvalidArgument(format!("tol = {tol}")));
        }
        let mut table = Self::tabulate(p, t_max, tol, GRID_RATIO)?;
        let mut gap = table.ode_gap()?;
        if gap > 10.0 * tol {
            table = Self::tabulate(p, t_max, tol, 1.0 + 0.5 * (GRID_RATIO - 1.0))?;
            gap = table.ode_gap()?;
            if gap > 10.0 * tol {
                return Err(LambdaError::ToleranceUnachievable { gap, tol });
            }
        }
        table.validation_gap = gap;
        Ok(table)
    }

    fn tabulate(p: &DegreeDistribution, t_max: f64, tol: f64, ratio: f64) -> Result<Self, LambdaError> {
        let polys = TailPolynomials::new(p);
        let mut nodes = vec![LambdaNode { t: 0.0, lambda: 0.0, lambda_prime: 1.0 }];
        let mut psi_acc = 0.0;
        let mut lam: f64 = 0.0;
        while psi_acc < t_max {
            let next = (1.0 + lam) * ratio - 1.0;
            if next > LAMBDA_LIMIT {
                return Err(LambdaError::NonFiniteResult { lambda: next });
            }
            psi_acc += gl32().integrate(lam, next, |x| polys.gamma(x));
            lam = next;
            nodes.push(LambdaNode { t: psi_acc, lambda: lam, lambda_prime: polys.lambda_prime(lam) });
        }
        Ok(Self { dist: p.clone(), polys, t_max, tol, nodes, validation_gap: f64::NAN })
    }

    /// Largest |λ_table − λ_ode| over a sample of node and midpoint times.
    fn ode_gap(&self) -> Result<f64, LambdaError> {
        let mut ts: Vec<f64> = Vec::new();
        let stride = (self.nodes.len() / 200).max(1);
        for w in self.nodes.windows(2).step_by(stride) {
            ts.push(w[0].t);
            ts.push(0.5 * (w[0].t + w[1].t).min(2.0 * self.t_max));
        }
        ts.retain(|&t| t <= self.t_max);
        ts.push(self.t_max);
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let polys = &self.polys;
        let solver = Dopri5::with_tol(1e-12, 1e-12);
        let ys = solver.solve(|_, y, d| d[0] = polys.lambda_prime(y[0]), 0.0, &[0.0], &ts)?;
        let mut gap: f64 = 0.0;
        for (t, y) in ts.iter().zip(&ys) {
            gap = gap.max((self.lambda(*t)? - y[0]).abs());
        }
        Ok(gap)
    }

    pub fn distribution(&self) -> &DegreeDistribution {
        &self.dist
    }

    pub fn polynomials(&self) -> &TailPolynomials {
        &self.polys
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn nodes(&self) -> &[LambdaNode] {
        &self.nodes
    }

    /// Largest disagreement with the RK cross-check observed at build time.
    pub fn validation_gap(&self) -> f64 {
        self.validation_gap
    }

    /// λ at the end of the horizon.
    pub fn lambda_max(&self) -> f64 {
        self.lambda(self.t_max).expect("horizon is inside the table")
    }

    fn check(&self, t: f64) -> Result<(), LambdaError> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(LambdaError::OutOfRange { t, t_max: self.t_max });
        }
        Ok(())
    }

    /// λ_p(t).
    pub fn lambda(&self, t: f64) -> Result<f64, LambdaError> {
        self.check(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let j = self.nodes.partition_point(|n| n.t <= t) - 1;
        let a = self.nodes[j];
        if a.t == t {
            return Ok(a.lambda);
        }
        let b = self.nodes[j + 1];
        let mut lam = hermite_guess(a, b, t).clamp(a.lambda, b.lambda);
        for _ in 0..6 {
            let g = a.t + gl16().integrate(a.lambda, lam, |x| self.polys.gamma(x)) - t;
            let step = g / self.polys.gamma(lam);
            lam = (lam - step).clamp(a.lambda, b.lambda);
            if step.abs() <= 4.0 * f64::EPSILON * lam.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        Ok(lam)
    }

    /// λ′_p(t).
    pub fn lambda_prime(&self, t: f64) -> Result<f64, LambdaError> {
        Ok(self.polys.lambda_prime(self.lambda(t)?))
    }

    /// Inverse map λ ↦ t = ψ_p(λ), restricted to the tabulated range.
    pub fn time_of(&self, lambda: f64) -> Result<f64, LambdaError> {
        let last = self.nodes.last().expect("non-empty");
        if !(0.0..=last.lambda).contains(&lambda) {
            return Err(LambdaError::NonFiniteResult { lambda });
        }
        let j = self.nodes.partition_point(|n| n.lambda <= lambda).max(1) - 1;
        let a = self.nodes[j];
        Ok(a.t + gl16().integrate(a.lambda, lambda, |x| self.polys.gamma(x)))
    }
}

/// Fritsch-Carlson limited cubic Hermite guess for λ at t in [a.t, b.t].
fn hermite_guess(a: LambdaNode, b: LambdaNode, t: f64) -> f64 {
    let h = b.t - a.t;
    let slope = (b.lambda - a.lambda) / h;
    let (mut m0, mut m1) = (a.lambda_prime, b.lambda_prime);
    let (al, be) = (m0 / slope, m1 / slope);
    let s = al * al + be * be;
    if s > 9.0 {
        let tau = 3.0 / s.sqrt();
        m0 = tau * al * slope;
        m1 = tau * be * slope;
    }
    let x = (t - a.t) / h;
    let x2 = x * x;
    let x3 = x2 * x;
    (2.0 * x3 - 3.0 * x2 + 1.0) * a.lambda
        + (x3 - 2.0 * x2 + x) * h * m0
        + (-2.0 * x3 + 3.0 * x2) * b.lambda
        + (x3 - x2) * h * m1
}

/// Point evaluators for H_p, I_p and F_p on top of a λ-table.
#[derive(Debug, Clone)]
pub struct HazardModel {
    table: Arc<LambdaTable>,
    tails: TailVector,
}

impl HazardModel {
    pub fn new(table: LambdaTable) -> Self {
        Self::from_shared(Arc::new(table))
    }

    pub fn from_shared(table: Arc<LambdaTable>) -> Self {
        let tails = table.distribution().tails();
        Self { table, tails }
    }

    /// Builds the table and wraps it.
    pub fn build(p: &DegreeDistribution, t_max: f64, tol: f64) -> Result<Self, LambdaError> {
        Ok(Self::new(LambdaTable::build(p, t_max, tol)?))
    }

    pub fn table(&self) -> &LambdaTable {
        &self.table
    }

    pub fn shared_table(&self) -> Arc<LambdaTable> {
        Arc::clone(&self.table)
    }

    pub fn tails(&self) -> &TailVector {
        &self.tails
    }

    pub fn distribution(&self) -> &DegreeDistribution {
        self.table.distribution()
    }

    pub fn t_max(&self) -> f64 {
        self.table.t_max()
    }

    /// H_p(t).
    pub fn hazard_density(&self, t: f64) -> Result<f64, LambdaError> {
        Ok(self.table.polynomials().hazard(self.table.lambda(t)?))
    }

    /// I_p(t) = Ĩ_p(λ_p(t)).
    pub fn survival(&self, t: f64) -> Result<f64, LambdaError> {
        Ok(self.survival_at_lambda(self.table.lambda(t)?))
    }

    /// Ĩ_p(λ).
    pub fn survival_at_lambda(&self, lambda: f64) -> f64 {
        self.table.polynomials().survival(lambda)
    }

    /// F_p(t̂) = ∫₀^t̂ (λ′_p)² ds, evaluated through the substitution ds = dλ/λ′, which
    /// turns it into Σ_k q_{k+1} P(Poisson(λ) ≥ k+1).
    pub fn mean_root_degree(&self, t_hat: f64) -> Result<f64, LambdaError> {
        let lam = self.table.lambda(t_hat)?;
        Ok((0..self.tails.delta()).map(|k| self.tails.q(k + 1) * poisson_upper_tail(lam, k + 1)).sum())
    }

    /// ∫_t^∞ (λ′_p)² ds = E D − F_p(t), without the cancellation.
    pub fn mean_root_degree_tail(&self, t: f64) -> Result<f64, LambdaError> {
        let lam = self.table.lambda(t)?;
        Ok((0..self.tails.delta()).map(|k| self.tails.q(k + 1) * poisson_lower_tail(lam, k)).sum())
    }

    /// Writes `t,lambda,lambda_prime,H,I` rows at the given times.
    pub fn write_csv<W: Write>(&self, mut w: W, times: &[f64]) -> Result<(), std::io::Error> {
        writeln!(w, "t,lambda,lambda_prime,H,I")?;
        for &t in times {
            let lam = self.table.lambda(t).map_err(std::io::Error::other)?;
            let polys = self.table.polynomials();
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t,
                lam,
                polys.lambda_prime(lam),
                polys.hazard(lam),
                polys.survival(lam)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_integrate;

    fn chi(d: usize) -> DegreeDistribution {
        DegreeDistribution::regular(d).unwrap()
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(&chi(2), 0.0).unwrap(), 0.0);
        let oracle = adaptive_integrate(|x: f64| x.exp() / (1.0 + x), 0.0, 1.0, 1e-14);
        let got = psi(&chi(2), 1.0).unwrap();
        assert!((got - oracle).abs() < 1e-14, "{got} vs {oracle}");
        // frozen scipy quad value
        assert!((got - 1.1253860830832696).abs() < 1e-14);
        for &l in &[0.1, 1.0, 5.0] {
            assert!(psi(&chi(3), l).unwrap() < psi(&chi(2), l).unwrap());
        }
        assert!(matches!(psi(&chi(2), 701.0), Err(LambdaError::NonFiniteResult { .. })));
        assert!(psi(&chi(2), -1.0).is_err());
    }

    #[test]
    fn table_start_and_bracket() {
        let t = LambdaTable::build(&chi(2), 50.0, 1e-10).unwrap();
        assert_eq!(t.lambda(0.0).unwrap(), 0.0);
        assert_eq!(t.lambda_prime(0.0).unwrap(), 1.0);
        let l1 = t.lambda(1.0).unwrap();
        assert!(2f64.ln() <= l1 && l1 <= 2.0 * 3f64.ln());
        assert!(t.validation_gap() < 1e-9);
        assert!(matches!(t.lambda(50.1), Err(LambdaError::OutOfRange { .. })));
        assert!(t.lambda(-1e-9).is_err());
    }

    #[test]
    fn psi_round_trip() {
        let p: DegreeDistribution = "2:0.6,3:0.3,5:0.1".parse().unwrap();
        let t = LambdaTable::build(&p, 100.0, 1e-10).unwrap();
        for &s in &[1e-6, 0.01, 0.7, 3.3, 42.0, 99.9] {
            let lam = t.lambda(s).unwrap();
            let back = psi(&p, lam).unwrap();
            assert!((back - s).abs() <= 1e-13 * s.max(1.0), "t={s}: {back}");
            assert!((t.time_of(lam).unwrap() - s).abs() <= 1e-13 * s.max(1.0));
        }
    }

    #[test]
    fn hazard_examples() {
        let h2 = HazardModel::build(&chi(2), 10.0, 1e-10).unwrap();
        assert_eq!(h2.hazard_density(0.0).unwrap(), 1.0);
        let p: DegreeDistribution = "2:0.3,4:0.7".parse().unwrap();
        let hp = HazardModel::build(&p, 10.0, 1e-10).unwrap();
        assert!((hp.hazard_density(0.0).unwrap() - 0.3).abs() < 1e-16);
        let h3 = HazardModel::build(&chi(3), 10.0, 1e-10).unwrap();
        assert_eq!(h3.hazard_density(0.0).unwrap(), 0.0);
        assert!(matches!(h3.hazard_density(11.0), Err(LambdaError::OutOfRange { .. })));
        for &s in &[0.5, 2.0, 7.0] {
            let lam = h2.table().lambda(s).unwrap();
            let expected = h2.table().lambda_prime(s).unwrap() * (-lam).exp();
            assert!((h2.hazard_density(s).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn survival_examples() {
        let h3 = HazardModel::build(&chi(3), 10.0, 1e-10).unwrap();
        assert_eq!(h3.survival(0.0).unwrap(), 1.0);
        let oracle = (-1f64).exp() * 2.0;
        assert!((h3.survival_at_lambda(1.0) - oracle).abs() < 1e-15);
        assert!((oracle - 0.7358).abs() < 1e-4);
        let h2 = HazardModel::build(&chi(2), 10.0, 1e-10).unwrap();
        for &s in &[0.1, 1.0, 9.0] {
            let lam = h2.table().lambda(s).unwrap();
            assert!((h2.survival(s).unwrap() - (-lam).exp()).abs() <= 1e-10);
        }
    }

    #[test]
    fn mean_root_degree_examples() {
        let h2 = HazardModel::build(&chi(2), 1e5, 1e-10).unwrap();
        assert_eq!(h2.mean_root_degree(0.0).unwrap(), 0.0);
        assert!((h2.mean_root_degree(1e5).unwrap() - 2.0).abs() < 1e-3);
        // t·tail decreases; no rate asserted
        let v: Vec<f64> = [50.0, 100.0, 200.0].iter().map(|&t| t * h2.mean_root_degree_tail(t).unwrap()).collect();
        assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
        // frozen values (independent ODE oracle gave 1.412, 1.356, 1.311)
        assert!((v[0] - 1.412).abs() < 2e-3 && (v[1] - 1.356).abs() < 2e-3 && (v[2] - 1.311).abs() < 2e-3);
    }

    #[test]
    fn csv_export() {
        let h = HazardModel::build(&chi(3), 2.0, 1e-10).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf, &[0.0, 1.0, 2.0]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,lambda,lambda_prime,H,I");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0"));
    }
}
