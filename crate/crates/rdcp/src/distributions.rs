//! Degree-constraint laws on {2, …, Δ} and the closed-form quantities derived from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported maximum degree.
pub const MAX_DELTA: usize = 64;
/// Absolute tolerance on Σ p_k = 1.
pub const SUM_TOL: f64 = 1e-12;
/// p_2 at or above 1 − CHI2_TOL is treated as the 2-regular law.
pub const CHI2_TOL: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("negative weight p_{k} = {value}")]
    NegativeWeight { k: usize, value: f64 },
    #[error("non-finite weight at k = {k}")]
    NonFinite { k: usize },
    #[error("weights sum to {sum}, not 1")]
    SumNotOne { sum: f64 },
    #[error("delta = {delta} is below 2")]
    DeltaTooSmall { delta: usize },
    #[error("delta = {delta} exceeds the cap of {MAX_DELTA}")]
    DeltaTooLarge { delta: usize },
    #[error("expected {expected} weights for delta, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("the 2-regular law has no (epsilon, r) representation and an infinite continuous critical time")]
    DegenerateRegular,
    #[error("invalid direction: {0}")]
    InvalidDirection(String),
    #[error("epsilon = {0} is outside (0, 1]")]
    InvalidEpsilon(f64),
    #[error("cannot parse distribution: {0}")]
    Parse(String),
}

/// Law p on {2, …, Δ}; `probs[i]` is p_{i+2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DegreeDistribution {
    delta: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    delta: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for DegreeDistribution {
    type Error = DistError;
    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        Self::validate(raw.probs, raw.delta)
    }
}

impl From<DegreeDistribution> for RawDistribution {
    fn from(d: DegreeDistribution) -> Self {
        Self { delta: d.delta, probs: d.probs }
    }
}

impl DegreeDistribution {
    /// Checks the weights and wraps them; never renormalizes.
    pub fn validate(probs: Vec<f64>, delta: usize) -> Result<Self, DistError> {
        if delta < 2 {
            return Err(DistError::DeltaTooSmall { delta });
        }
        if delta > MAX_DELTA {
            return Err(DistError::DeltaTooLarge { delta });
        }
        if probs.len() != delta - 1 {
            return Err(DistError::LengthMismatch { expected: delta - 1, got: probs.len() });
        }
        for (i, &v) in probs.iter().enumerate() {
            if !v.is_finite() {
                return Err(DistError::NonFinite { k: i + 2 });
            }
            if v < 0.0 {
                return Err(DistError::NegativeWeight { k: i + 2, value: v });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(DistError::SumNotOne { sum });
        }
        Ok(Self { delta, probs })
    }

    /// All mass on constraint d (χ_d).
    pub fn regular(d: usize) -> Result<Self, DistError> {
        let delta = d;
        if delta < 2 {
            return Err(DistError::DeltaTooSmall { delta });
        }
        let mut probs = vec![0.0; delta.saturating_sub(1)];
        if let Some(last) = probs.last_mut() {
            *last = 1.0;
        }
        Self::validate(probs, delta)
    }

    pub fn from_json(s: &str) -> Result<Self, DistError> {
        serde_json::from_str(s).map_err(|e| DistError::Parse(e.to_string()))
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// p_k, zero outside {2, …, Δ}.
    pub fn p(&self, k: usize) -> f64 {
        if k < 2 || k > self.delta {
            0.0
        } else {
            self.probs[k - 2]
        }
    }

    pub fn is_two_regular(&self) -> bool {
        self.p(2) >= 1.0 - CHI2_TOL
    }

    pub fn tails(&self) -> TailVector {
        let mut q = vec![0.0; self.delta];
        let mut acc = 0.0;
        for k in (3..=self.delta).rev() {
            acc += self.p(k);
            q[k - 1] = acc;
        }
        q[0] = 1.0;
        q[1] = 1.0;
        TailVector { q }
    }

    /// E D.
    pub fn mean(&self) -> f64 {
        (2..=self.delta).map(|k| k as f64 * self.p(k)).sum()
    }

    /// E D².
    pub fn second_moment(&self) -> f64 {
        (2..=self.delta).map(|k| (k * k) as f64 * self.p(k)).sum()
    }

    /// Σ k(k−2) p_k.
    pub fn molloy_reed_sum(&self) -> f64 {
        (3..=self.delta).map(|k| (k * (k - 2)) as f64 * self.p(k)).sum()
    }

    pub fn to_epsilon_direction(&self) -> Result<EpsilonDirection, DistError> {
        if self.is_two_regular() {
            return Err(DistError::DegenerateRegular);
        }
        let epsilon: f64 = (3..=self.delta).map(|k| self.p(k)).sum();
        let mut r = Vec::with_capacity(self.delta - 1);
        r.push(-1.0);
        r.extend((3..=self.delta).map(|k| exact_ratio(self.p(k), epsilon)));
        let direction = Direction::from_parts(r);
        Ok(EpsilonDirection { epsilon, direction })
    }

    pub fn from_epsilon_direction(ed: &EpsilonDirection) -> Result<Self, DistError> {
        let delta = ed.direction.delta();
        let probs =
            (2..=delta).map(|k| if k == 2 { 1.0 - ed.epsilon } else { ed.epsilon * ed.direction.r(k) }).collect();
        Self::validate(probs, delta)
    }

    /// First-order prediction 1 / Σ k(k−2) p_k of the continuous critical time.
    pub fn asymptotic_tc_hat(&self) -> Result<f64, DistError> {
        if self.is_two_regular() {
            return Err(DistError::DegenerateRegular);
        }
        Ok(1.0 / self.molloy_reed_sum())
    }

    /// First-order prediction 1 − ½ Σ_{k≥3} (k²−3k+2) p_k of the discrete critical time.
    pub fn asymptotic_tc_disc(&self) -> f64 {
        let s: f64 = (3..=self.delta).map(|k| ((k - 1) * (k - 2)) as f64 * self.p(k)).sum();
        1.0 - 0.5 * s
    }

    /// Configuration-model threshold (E D)² / (2 E[D(D−1)]).
    pub fn heuristic_percolation_threshold(&self) -> f64 {
        let m = self.mean();
        let f2: f64 = (2..=self.delta).map(|k| (k * (k - 1)) as f64 * self.p(k)).sum();
        m * m / (2.0 * f2)
    }
}

impl fmt::Display for DegreeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for k in 2..=self.delta {
            let v = self.p(k);
            if v > 0.0 {
                if !first {
                    write!(f, ",")?;
                }
                write!(f, "{k}:{v}")?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Parses `2:0.99,3:0.01`; Δ is the largest listed constraint.
impl FromStr for DegreeDistribution {
    type Err = DistError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let pairs = parse_pairs(s)?;
        let delta = pairs.iter().map(|&(k, _)| k).max().ok_or_else(|| DistError::Parse("empty".into()))?;
        if delta > MAX_DELTA {
            return Err(DistError::DeltaTooLarge { delta });
        }
        let mut probs = vec![0.0; delta.max(2) - 1];
        for (k, v) in pairs {
            if k < 2 {
                return Err(DistError::Parse(format!("constraint {k} is below 2")));
            }
            probs[k - 2] = v;
        }
        Self::validate(probs, delta)
    }
}

fn parse_pairs(s: &str) -> Result<Vec<(usize, f64)>, DistError> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (k, v) =
            item.split_once(':').ok_or_else(|| DistError::Parse(format!("`{item}` is not of the form k:value")))?;
        let k: usize = k.trim().parse().map_err(|_| DistError::Parse(format!("bad degree `{k}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| DistError::Parse(format!("bad weight `{v}`")))?;
        if out.iter().any(|&(j, _)| j == k) {
            return Err(DistError::Parse(format!("degree {k} listed twice")));
        }
        out.push((k, v));
    }
    if out.is_empty() {
        return Err(DistError::Parse("no entries".into()));
    }
    Ok(out)
}

/// Tails q_k = Σ_{d≥k} p_d; `q[i]` is q_{i+1}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailVector {
    q: Vec<f64>,
}

impl TailVector {
    /// q_k for any k ≥ 0 (q_0 = q_1 = q_2 = 1, zero past Δ).
    pub fn q(&self, k: usize) -> f64 {
        match k {
            0 => 1.0,
            k if k > self.q.len() => 0.0,
            k => self.q[k - 1],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn delta(&self) -> usize {
        self.q.len()
    }
}

/// A direction r with r_2 = −1, r_k ≥ 0 and Σ_{k≥3} r_k = 1, plus its tails s_k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Direction {
    r: Vec<f64>,
    s: Vec<f64>,
}

impl Direction {
    /// `r[i]` is r_{i+2}.
    pub fn new(r: Vec<f64>) -> Result<Self, DistError> {
        let delta = r.len() + 1;
        if delta < 3 {
            return Err(DistError::InvalidDirection("needs at least one constraint above 2".into()));
        }
        if delta > MAX_DELTA {
            return Err(DistError::DeltaTooLarge { delta });
        }
        if (r[0] + 1.0).abs() > SUM_TOL {
            return Err(DistError::InvalidDirection(format!("r_2 = {} instead of -1", r[0])));
        }
        for (i, &v) in r.iter().enumerate().skip(1) {
            if !v.is_finite() || v < 0.0 {
                return Err(DistError::InvalidDirection(format!("r_{} = {v} is negative", i + 2)));
            }
        }
        let sum: f64 = r[1..].iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(DistError::InvalidDirection(format!("r_3 + … + r_Δ = {sum}, not 1")));
        }
        Ok(Self::from_parts(r))
    }

    fn from_parts(r: Vec<f64>) -> Self {
        let mut s = vec![0.0; r.len()];
        let mut acc = 0.0;
        for i in (1..r.len()).rev() {
            acc += r[i];
            s[i] = acc;
        }
        s[0] = 0.0;
        if s.len() > 1 {
            s[1] = 1.0;
        }
        Self { r, s }
    }

    /// The extreme direction r_d = 1.
    pub fn unit(d: usize) -> Result<Self, DistError> {
        if d < 3 {
            return Err(DistError::InvalidDirection(format!("unit direction needs d ≥ 3, got {d}")));
        }
        let mut r = vec![0.0; d - 1];
        r[0] = -1.0;
        r[d - 2] = 1.0;
        Self::new(r)
    }

    pub fn delta(&self) -> usize {
        self.r.len() + 1
    }

    /// r_k, zero outside {2, …, Δ}.
    pub fn r(&self, k: usize) -> f64 {
        if k < 2 || k > self.delta() {
            0.0
        } else {
            self.r[k - 2]
        }
    }

    /// s_k = Σ_{d≥k} r_d for k ≥ 2 (s_2 = 0, s_3 = 1); zero past Δ and below 2.
    pub fn s(&self, k: usize) -> f64 {
        if k < 2 || k > self.delta() {
            0.0
        } else {
            self.s[k - 2]
        }
    }

    pub fn r_slice(&self) -> &[f64] {
        &self.r
    }

    pub fn s_slice(&self) -> &[f64] {
        &self.s
    }

    /// Υ_r = Σ_{k≥3} k(k−2) r_k.
    pub fn molloy_reed_constant(&self) -> f64 {
        (3..=self.delta()).map(|k| (k * (k - 2)) as f64 * self.r(k)).sum()
    }

    /// Σ_{k≥3} (k²−3k+2) r_k, the slope of 1 − t_c in ε.
    pub fn discrete_constant(&self) -> f64 {
        (3..=self.delta()).map(|k| ((k - 1) * (k - 2)) as f64 * self.r(k)).sum()
    }
}

/// Parses `3:0.5,4:0.5` as the r_k for k ≥ 3; r_2 = −1 is implied.
impl FromStr for Direction {
    type Err = DistError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let pairs = parse_pairs(s)?;
        let delta = pairs.iter().map(|&(k, _)| k).max().unwrap_or(0);
        if delta < 3 {
            return Err(DistError::InvalidDirection("needs an entry with k ≥ 3".into()));
        }
        if delta > MAX_DELTA {
            return Err(DistError::DeltaTooLarge { delta });
        }
        let mut r = vec![0.0; delta - 1];
        r[0] = -1.0;
        for (k, v) in pairs {
            if k < 3 {
                return Err(DistError::InvalidDirection(format!("entry for k = {k}; list only k ≥ 3")));
            }
            r[k - 2] = v;
        }
        Self::new(r)
    }
}

/// p/ε, nudged by a few ulps when that makes ε·r round back to p exactly.
fn exact_ratio(p: f64, epsilon: f64) -> f64 {
    let r = p / epsilon;
    if epsilon * r == p {
        return r;
    }
    let (mut up, mut down) = (r, r);
    for _ in 0..4 {
        up = up.next_up();
        down = down.next_down();
        for c in [up, down] {
            if epsilon * c == p {
                return c;
            }
        }
    }
    r
}

/// (ε, r) with p_k = 1{k=2} + ε r_k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonDirection {
    pub epsilon: f64,
    pub direction: Direction,
}

impl EpsilonDirection {
    pub fn new(epsilon: f64, direction: Direction) -> Result<Self, DistError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(DistError::InvalidEpsilon(epsilon));
        }
        Ok(Self { epsilon, direction })
    }

    pub fn molloy_reed_constant(&self) -> f64 {
        self.direction.molloy_reed_constant()
    }

    pub fn distribution(&self) -> Result<DegreeDistribution, DistError> {
        DegreeDistribution::from_epsilon_direction(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> DegreeDistribution {
        s.parse().unwrap()
    }

    #[test]
    fn validate_examples() {
        let chi2 = DegreeDistribution::validate(vec![1.0], 2).unwrap();
        assert!(chi2.is_two_regular());
        let chi3 = DegreeDistribution::validate(vec![0.0, 1.0], 3).unwrap();
        assert_eq!(chi3.p(3), 1.0);
        assert!(DegreeDistribution::validate(vec![0.99, 0.01], 3).is_ok());
    }

    #[test]
    fn validate_errors() {
        assert_eq!(DegreeDistribution::validate(vec![1.0], 1), Err(DistError::DeltaTooSmall { delta: 1 }));
        assert!(matches!(
            DegreeDistribution::validate(vec![1.1, -0.1], 3),
            Err(DistError::NegativeWeight { k: 3, .. })
        ));
        assert!(matches!(DegreeDistribution::validate(vec![0.5, 0.4], 3), Err(DistError::SumNotOne { .. })));
        // no silent renormalization inside the tolerance band edge
        assert!(DegreeDistribution::validate(vec![0.5, 0.5 + 5e-13], 3).is_ok());
        assert!(DegreeDistribution::validate(vec![0.5, 0.5 + 5e-12], 3).is_err());
        assert!(matches!(DegreeDistribution::validate(vec![1.0; 2], 65), Err(DistError::DeltaTooLarge { .. })));
    }

    #[test]
    fn tails_examples() {
        let chi3 = DegreeDistribution::regular(3).unwrap();
        assert_eq!(chi3.tails().as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(d("2:0.99,3:0.01").tails().as_slice(), &[1.0, 1.0, 0.01]);
        assert_eq!(DegreeDistribution::regular(2).unwrap().tails().as_slice(), &[1.0, 1.0]);
        let t = chi3.tails();
        assert_eq!(t.q(0), 1.0);
        assert_eq!(t.q(4), 0.0);
    }

    #[test]
    fn epsilon_direction_examples() {
        let ed = d("2:0.99,3:0.01").to_epsilon_direction().unwrap();
        assert!((ed.epsilon - 0.01).abs() < 1e-18);
        assert_eq!(ed.direction.r_slice(), &[-1.0, 1.0]);
        assert_eq!(ed.direction.s_slice(), &[0.0, 1.0]);

        let ed = d("2:0.9,3:0.05,4:0.05").to_epsilon_direction().unwrap();
        assert!((ed.epsilon - 0.1).abs() < 1e-16);
        assert!((ed.direction.r(3) - 0.5).abs() < 1e-15);
        assert!((ed.direction.r(4) - 0.5).abs() < 1e-15);
        assert_eq!(ed.direction.s(2), 0.0);
        assert_eq!(ed.direction.s(3), 1.0);
        assert!((ed.direction.s(4) - 0.5).abs() < 1e-15);

        assert_eq!(DegreeDistribution::regular(2).unwrap().to_epsilon_direction(), Err(DistError::DegenerateRegular));
    }

    #[test]
    fn molloy_reed_examples() {
        assert_eq!(Direction::unit(3).unwrap().molloy_reed_constant(), 3.0);
        assert_eq!(Direction::unit(4).unwrap().molloy_reed_constant(), 8.0);
        let r: Direction = "3:0.5,4:0.5".parse().unwrap();
        assert_eq!(r.molloy_reed_constant(), 5.5);
    }

    #[test]
    fn asymptotic_examples() {
        let a = d("2:0.99,3:0.01").asymptotic_tc_hat().unwrap();
        assert!((a - 1.0 / 0.03).abs() < 1e-12);
        assert!((DegreeDistribution::regular(3).unwrap().asymptotic_tc_hat().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let a = d("2:0.999,3:0.001").asymptotic_tc_hat().unwrap();
        assert!((a - 1000.0 / 3.0).abs() < 1e-9);
        assert!(DegreeDistribution::regular(2).unwrap().asymptotic_tc_hat().is_err());

        assert_eq!(DegreeDistribution::regular(2).unwrap().asymptotic_tc_disc(), 1.0);
        assert!((d("2:0.99,3:0.01").asymptotic_tc_disc() - 0.99).abs() < 1e-15);
        assert!((d("2:0.99,4:0.01").asymptotic_tc_disc() - 0.97).abs() < 1e-15);
    }

    #[test]
    fn heuristic_examples() {
        assert_eq!(DegreeDistribution::regular(3).unwrap().heuristic_percolation_threshold(), 0.75);
        assert_eq!(DegreeDistribution::regular(2).unwrap().heuristic_percolation_threshold(), 1.0);
        // oracle: E D = 2.01, E[D(D−1)] = 2·0.99 + 6·0.01 = 2.04
        let expected = 2.01f64 * 2.01 / (2.0 * 2.04);
        let got = d("2:0.99,3:0.01").heuristic_percolation_threshold();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.990_220_588_235_294_1).abs() < 1e-15);
    }

    #[test]
    fn parse_shorthand_and_json() {
        let p = d("3:1.0");
        assert_eq!(p.delta(), 3);
        assert_eq!(p.probs(), &[0.0, 1.0]);
        let q = DegreeDistribution::from_json(r#"{"delta":3,"probs":[0.99,0.01]}"#).unwrap();
        assert_eq!(q, d("2:0.99,3:0.01"));
        let back = serde_json::to_string(&q).unwrap();
        assert_eq!(back, r#"{"delta":3,"probs":[0.99,0.01]}"#);
        assert!(DegreeDistribution::from_json(r#"{"delta":3,"probs":[0.5,0.4]}"#).is_err());
        assert!("2:0.5,2:0.5".parse::<DegreeDistribution>().is_err());
        assert!("1:1".parse::<DegreeDistribution>().is_err());
        assert!("".parse::<DegreeDistribution>().is_err());
        assert_eq!(d("2:0.99,3:0.01").to_string(), "2:0.99,3:0.01");
    }

    #[test]
    fn direction_parse() {
        let r: Direction = "5:1".parse().unwrap();
        assert_eq!(r.delta(), 5);
        assert_eq!(r.r_slice(), &[-1.0, 0.0, 0.0, 1.0]);
        assert_eq!(r.s_slice(), &[0.0, 1.0, 1.0, 1.0]);
        assert!("3:0.5".parse::<Direction>().is_err());
        assert!("2:1".parse::<Direction>().is_err());
    }
}
