//! Seeded Monte Carlo simulation of the RDCP on K_n.
//!
//! Discrete mode adds one uniformly chosen allowed edge per step until saturation.
//! Continuous mode replays attempts in uniform random edge order with exponential
//! inter-attempt times, then finishes with the discrete sampler after the last
//! checkpoint: every allowed absent edge is still unattempted at that point, so the
//! remaining successful edges have the discrete law.

use std::collections::HashSet;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::distributions::DegreeDistribution;
use crate::lambda_solver::{LambdaError, LambdaTable};
use crate::numeric::poisson_upper_tail;

/// Environment variable capping replicate parallelism.
pub const THREADS_ENV: &str = "RDCP_THREADS";
const BFS_CHECK_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("largest component stayed below the threshold in {missed} of {reps} replicates")]
    ThresholdNeverReached { missed: usize, reps: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    #[default]
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub dist: DegreeDistribution,
    pub seed: u64,
    /// Replicate stream of the master seed.
    #[serde(default)]
    pub stream: u64,
    /// Edge-count fractions s (discrete) or t̂ values (continuous), ascending.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub mode: SimMode,
    /// Record the first s = ℓ/n at which largest/n reaches this fraction.
    #[serde(default)]
    pub crossing_fraction: Option<f64>,
}

impl SimConfig {
    pub fn discrete(n: usize, dist: DegreeDistribution, seed: u64, checkpoints: Vec<f64>) -> Self {
        Self { n, dist, seed, stream: 0, checkpoints, mode: SimMode::Discrete, crossing_fraction: None }
    }

    pub fn continuous(n: usize, dist: DegreeDistribution, seed: u64, checkpoints: Vec<f64>) -> Self {
        Self { mode: SimMode::Continuous, ..Self::discrete(n, dist, seed, checkpoints) }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("n = {} < 2", self.n));
        }
        if self.n > u32::MAX as usize {
            return bad(format!("n = {} too large", self.n));
        }
        if self.checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return bad("checkpoints must be ascending".into());
        }
        if self.checkpoints.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return bad("checkpoints must be finite and non-negative".into());
        }
        if self.mode == SimMode::Discrete {
            let cap = 0.5 * self.dist.mean();
            if let Some(c) = self.checkpoints.iter().find(|&&c| c > cap + 1e-12) {
                return bad(format!("checkpoint s = {c} exceeds E(D)/2 = {cap}"));
            }
        }
        if let Some(f) = self.crossing_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("crossing fraction {f} outside (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Snapshot of the graph at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub checkpoint: f64,
    pub edges: u64,
    /// Attempted edges so far (continuous mode).
    pub attempts: Option<u64>,
    pub largest: u32,
    pub second: u32,
    /// `degree_hist[k][j]`: vertices with constraint k and current degree j.
    pub degree_hist: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub edges: u64,
    /// ℓ/n at the crossing edge.
    pub s: f64,
    /// Attempt time of the crossing edge, when it happened in the continuous phase.
    pub t_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub n: usize,
    pub seed: u64,
    pub stream: u64,
    pub mode: SimMode,
    pub records: Vec<CheckpointRecord>,
    pub crossing: Option<Crossing>,
    /// M_n
    pub final_edges: u64,
    pub final_unsaturated: usize,
    pub final_largest: u32,
    pub final_second: u32,
}

struct Graph {
    cons: Vec<u8>,
    adj: Vec<SmallVec<[u32; 4]>>,
    unsat: Vec<u32>,
    pos: Vec<u32>,
    parent: Vec<u32>,
    size: Vec<u32>,
    largest: u32,
    edges: u64,
    delta: usize,
    crossing_size: Option<u32>,
    crossing: Option<Crossing>,
}

const NOT_IN_SET: u32 = u32::MAX;

impl Graph {
    fn new(n: usize, dist: &DegreeDistribution, rng: &mut ChaCha8Rng) -> Self {
        let delta = dist.delta();
        let sampler = WeightedIndex::new(dist.probs()).expect("validated distribution");
        let cons: Vec<u8> = (0..n).map(|_| (sampler.sample(rng) + 2) as u8).collect();
        Self {
            cons,
            adj: vec![SmallVec::new(); n],
            unsat: (0..n as u32).collect(),
            pos: (0..n as u32).collect(),
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            largest: 1,
            edges: 0,
            delta,
            crossing_size: None,
            crossing: None,
        }
    }

    fn n(&self) -> usize {
        self.cons.len()
    }

    fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    fn is_unsaturated(&self, v: u32) -> bool {
        self.degree(v) < self.cons[v as usize] as usize
    }

    fn has_edge(&self, a: u32, b: u32) -> bool {
        let (x, y) = if self.degree(a) <= self.degree(b) { (a, b) } else { (b, a) };
        self.adj[x as usize].binary_search(&y).is_ok()
    }

    fn find(&mut self, mut v: u32) -> u32 {
        while self.parent[v as usize] != v {
            let g = self.parent[self.parent[v as usize] as usize];
            self.parent[v as usize] = g;
            v = g;
        }
        v
    }

    fn remove_unsat(&mut self, v: u32) {
        let i = self.pos[v as usize];
        debug_assert_ne!(i, NOT_IN_SET);
        let last = *self.unsat.last().expect("non-empty");
        self.unsat.swap_remove(i as usize);
        if last != v {
            self.pos[last as usize] = i;
        }
        self.pos[v as usize] = NOT_IN_SET;
    }

    fn add_edge(&mut self, a: u32, b: u32, t_hat: Option<f64>) {
        debug_assert!(a != b && !self.has_edge(a, b));
        debug_assert!(self.is_unsaturated(a) && self.is_unsaturated(b), "degree constraint violated");
        for (x, y) in [(a, b), (b, a)] {
            let list = &mut self.adj[x as usize];
            let at = list.partition_point(|&z| z < y);
            list.insert(at, y);
            if list.len() == self.cons[x as usize] as usize {
                self.remove_unsat(x);
            }
        }
        self.edges += 1;
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] { (ra, rb) } else { (rb, ra) };
            self.parent[small as usize] = big;
            self.size[big as usize] += self.size[small as usize];
            self.largest = self.largest.max(self.size[big as usize]);
        }
        if let Some(c) = self.crossing_size {
            if self.crossing.is_none() && self.largest >= c {
                self.crossing = Some(Crossing { edges: self.edges, s: self.edges as f64 / self.n() as f64, t_hat });
            }
        }
    }

    /// (largest, second largest) component sizes by scanning roots.
    fn top_two(&mut self) -> (u32, u32) {
        let (mut first, mut second) = (0, 0);
        for v in 0..self.n() as u32 {
            if self.parent[v as usize] == v {
                let s = self.size[v as usize];
                if s > first {
                    second = first;
                    first = s;
                } else if s > second {
                    second = s;
                }
            }
        }
        debug_assert_eq!(first, self.largest);
        (first, second)
    }

    /// Component sizes recounted by breadth-first search.
    fn bfs_top_two(&self) -> (u32, u32) {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = Vec::new();
        let (mut first, mut second) = (0, 0);
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            queue.clear();
            queue.push(s as u32);
            let mut head = 0;
            while head < queue.len() {
                let v = queue[head] as usize;
                head += 1;
                for &w in &self.adj[v] {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        queue.push(w);
                    }
                }
            }
            let c = queue.len() as u32;
            if c > first {
                second = first;
                first = c;
            } else if c > second {
                second = c;
            }
        }
        (first, second)
    }

    fn record(&mut self, checkpoint: f64, attempts: Option<u64>) -> CheckpointRecord {
        let (largest, second) = self.top_two();
        if cfg!(debug_assertions) && self.n() <= BFS_CHECK_LIMIT {
            assert_eq!(self.bfs_top_two(), (largest, second), "union-find disagrees with BFS");
        }
        let mut hist = vec![Vec::new(); self.delta + 1];
        for (k, row) in hist.iter_mut().enumerate().skip(2) {
            *row = vec![0u32; k + 1];
        }
        for v in 0..self.n() {
            hist[self.cons[v] as usize][self.adj[v].len()] += 1;
        }
        CheckpointRecord { checkpoint, edges: self.edges, attempts, largest, second, degree_hist: hist }
    }

    /// Allowed absent pairs among unsaturated vertices.
    fn allowed_pairs(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let mut u = self.unsat.clone();
        u.sort_unstable();
        for (i, &a) in u.iter().enumerate() {
            for &b in &u[i + 1..] {
                if !self.has_edge(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// One uniform allowed edge, or None at saturation.
    fn next_discrete_edge(&self, rng: &mut ChaCha8Rng) -> Option<(u32, u32)> {
        let u = self.unsat.len();
        if u <= 2 * self.delta + 2 {
            let pairs = self.allowed_pairs();
            if pairs.is_empty() {
                return None;
            }
            return Some(pairs[rng.random_range(0..pairs.len())]);
        }
        loop {
            let i = rng.random_range(0..u);
            let mut j = rng.random_range(0..u - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = (self.unsat[i], self.unsat[j]);
            if !self.has_edge(a, b) {
                return Some((a, b));
            }
        }
    }

    fn run_discrete(&mut self, rng: &mut ChaCha8Rng, targets: &[(f64, u64)], records: &mut Vec<CheckpointRecord>) {
        let mut next = 0;
        loop {
            while next < targets.len() && targets[next].1 == self.edges {
                records.push(self.record(targets[next].0, None));
                next += 1;
            }
            match self.next_discrete_edge(rng) {
                Some((a, b)) => self.add_edge(a, b, None),
                None => break,
            }
        }
        // checkpoints past M_n see the final graph
        while next < targets.len() {
            records.push(self.record(targets[next].0, None));
            next += 1;
        }
    }
}

fn rng_for(cfg: &SimConfig) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream);
    rng
}

fn finish(mut g: Graph, cfg: &SimConfig, records: Vec<CheckpointRecord>) -> SimTrace {
    let (final_largest, final_second) = g.top_two();
    SimTrace {
        n: cfg.n,
        seed: cfg.seed,
        stream: cfg.stream,
        mode: cfg.mode,
        records,
        crossing: g.crossing.take(),
        final_edges: g.edges,
        final_unsaturated: g.unsat.len(),
        final_largest,
        final_second,
    }
}

fn crossing_size(cfg: &SimConfig) -> Option<u32> {
    cfg.crossing_fraction.map(|f| ((f * cfg.n as f64).ceil() as u32).max(1))
}

/// Discrete-time RDCP to saturation, recording checkpoints at ℓ = ⌊n·s⌋.
pub fn simulate_discrete(cfg: &SimConfig) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    if cfg.mode != SimMode::Discrete {
        return Err(SimError::InvalidConfig("continuous config passed to simulate_discrete".into()));
    }
    let mut rng = rng_for(cfg);
    let mut g = Graph::new(cfg.n, &cfg.dist, &mut rng);
    g.crossing_size = crossing_size(cfg);
    let targets: Vec<(f64, u64)> = cfg.checkpoints.iter().map(|&s| (s, (cfg.n as f64 * s).floor() as u64)).collect();
    let mut records = Vec::with_capacity(targets.len());
    g.run_discrete(&mut rng, &targets, &mut records);
    Ok(finish(g, cfg, records))
}

/// Continuous-time RDCP: checkpoints at t̂ values, then run to saturation.
pub fn simulate_continuous(cfg: &SimConfig) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    if cfg.mode != SimMode::Continuous {
        return Err(SimError::InvalidConfig("discrete config passed to simulate_continuous".into()));
    }
    let mut rng = rng_for(cfg);
    let mut g = Graph::new(cfg.n, &cfg.dist, &mut rng);
    g.crossing_size = crossing_size(cfg);
    let n = cfg.n as u64;
    let total = n * (n - 1) / 2;
    let mut attempted: HashSet<u64> = HashSet::new();
    let mut records = Vec::with_capacity(cfg.checkpoints.len());
    let mut time = 0.0;
    let mut attempts = 0u64;
    for &t_hat in &cfg.checkpoints {
        loop {
            if attempts == total {
                break;
            }
            let rate = (total - attempts) as f64 / cfg.n as f64;
            let dt: f64 = Exp::new(rate).expect("positive rate").sample(&mut rng);
            if time + dt > t_hat {
                // memoryless: the overshooting clock is redrawn from t̂ on the next pass
                time = t_hat;
                break;
            }
            time += dt;
            let (a, b) = loop {
                let a = rng.random_range(0..cfg.n as u32);
                let mut b = rng.random_range(0..cfg.n as u32 - 1);
                if b >= a {
                    b += 1;
                }
                let (a, b) = (a.min(b), a.max(b));
                if attempted.insert(a as u64 * n + b as u64) {
                    break (a, b);
                }
            };
            attempts += 1;
            if g.is_unsaturated(a) && g.is_unsaturated(b) {
                g.add_edge(a, b, Some(time));
            }
        }
        records.push(g.record(t_hat, Some(attempts)));
    }
    drop(attempted);
    g.run_discrete(&mut rng, &[], &mut records);
    Ok(finish(g, cfg, records))
}

pub fn simulate(cfg: &SimConfig) -> Result<SimTrace, SimError> {
    match cfg.mode {
        SimMode::Discrete => simulate_discrete(cfg),
        SimMode::Continuous => simulate_continuous(cfg),
    }
}

/// Threads allowed by `RDCP_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t: &usize| t > 0)
}

/// Runs `reps` replicates on streams 0..reps of the master seed, in parallel.
pub fn run_replicates(cfg: &SimConfig, reps: usize) -> Result<Vec<SimTrace>, SimError> {
    cfg.validate()?;
    let run = || {
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| simulate(&SimConfig { stream: rep, ..cfg.clone() }))
            .collect::<Result<Vec<_>, _>>()
    };
    match thread_cap() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Predicted degree profile of the continuous process at time t̂.
#[derive(Debug, Clone, Serialize)]
pub struct DegreeProfile {
    pub t_hat: f64,
    pub lambda: f64,
    /// z_k = e^{−λ} λ^k/k! p_{k+1}, k = 0..Δ−1
    pub z: Vec<f64>,
    /// `joint[d][j]`: fraction of vertices with constraint d and degree j
    pub joint: Vec<Vec<f64>>,
}

impl DegreeProfile {
    /// Fraction of vertices still below their constraint, equal to λ′.
    pub fn unsaturated(&self) -> f64 {
        self.joint.iter().enumerate().map(|(d, row)| row.iter().take(d).sum::<f64>()).sum()
    }

    /// Fraction of vertices with current degree j, any constraint.
    pub fn degree_marginal(&self, j: usize) -> f64 {
        self.joint.iter().filter_map(|row| row.get(j)).sum()
    }
}

/// A vertex with constraint d has degree min(d, Poi(λ(t̂))) in the limit.
pub fn degree_profile_expected(
    p: &DegreeDistribution,
    table: &LambdaTable,
    t_hat: f64,
) -> Result<DegreeProfile, LambdaError> {
    let lambda = table.lambda(t_hat)?;
    let delta = p.delta();
    let mut pmf = Vec::with_capacity(delta + 1);
    let mut term = (-lambda).exp();
    for j in 0..=delta {
        pmf.push(term);
        term *= lambda / (j + 1) as f64;
    }
    let z = (0..delta).map(|k| pmf[k] * p.p(k + 1)).collect();
    let mut joint = vec![Vec::new(); delta + 1];
    for (d, row) in joint.iter_mut().enumerate().skip(2) {
        let pd = p.p(d);
        *row = (0..d).map(|j| pd * pmf[j]).collect();
        row.push(pd * poisson_upper_tail(lambda, d));
    }
    Ok(DegreeProfile { t_hat, lambda, z, joint })
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalTimeEstimate {
    pub n: usize,
    pub reps: usize,
    pub threshold: f64,
    /// Median crossing s = ℓ/n (upward biased at finite n).
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Coverage of the order-statistic interval for the median.
    pub ci_level: f64,
    /// Per replicate, None if the threshold was never reached.
    pub crossings: Vec<Option<f64>>,
}

/// Median over replicates of the first s at which largest/n ≥ `threshold`.
pub fn empirical_critical_time(
    p: &DegreeDistribution,
    n: usize,
    reps: usize,
    threshold: f64,
    seed: u64,
) -> Result<CriticalTimeEstimate, SimError> {
    if reps < 5 {
        return Err(SimError::InvalidConfig(format!("reps = {reps} < 5")));
    }
    if !(threshold > 0.0 && threshold < 0.2) {
        return Err(SimError::InvalidConfig(format!("threshold {threshold} outside (0, 0.2)")));
    }
    let cfg = SimConfig { crossing_fraction: Some(threshold), ..SimConfig::discrete(n, p.clone(), seed, Vec::new()) };
    let traces = run_replicates(&cfg, reps)?;
    let crossings: Vec<Option<f64>> = traces.iter().map(|t| t.crossing.as_ref().map(|c| c.s)).collect();
    summarize_crossings(n, threshold, crossings)
}

/// Median with never-crossing replicates counted as +∞.
pub fn summarize_crossings(
    n: usize,
    threshold: f64,
    crossings: Vec<Option<f64>>,
) -> Result<CriticalTimeEstimate, SimError> {
    let reps = crossings.len();
    let missed = crossings.iter().filter(|c| c.is_none()).count();
    if 2 * missed >= reps {
        return Err(SimError::ThresholdNeverReached { missed, reps });
    }
    let mut sorted: Vec<f64> = crossings.iter().map(|c| c.unwrap_or(f64::INFINITY)).collect();
    sorted.sort_by(f64::total_cmp);
    let median = if reps % 2 == 1 { sorted[reps / 2] } else { 0.5 * (sorted[reps / 2 - 1] + sorted[reps / 2]) };
    let (lo, hi, level) = median_interval(reps);
    Ok(CriticalTimeEstimate {
        n,
        reps,
        threshold,
        median,
        ci_low: sorted[lo],
        ci_high: sorted[hi],
        ci_level: level,
        crossings,
    })
}

/// Widest-needed symmetric order statistics (j, reps−1−j) covering the median at ≥ 95%,
/// or the extremes when no such pair exists.
fn median_interval(reps: usize) -> (usize, usize, f64) {
    let mut cdf = vec![0.0; reps + 1];
    let mut pmf = 0.5f64.powi(reps as i32);
    let mut acc = 0.0;
    for (k, c) in cdf.iter_mut().enumerate() {
        acc += pmf;
        *c = acc;
        pmf *= (reps - k) as f64 / (k + 1) as f64;
    }
    let coverage = |j: usize| if j == 0 { 1.0 - 2.0 * 0.5f64.powi(reps as i32) } else { 1.0 - 2.0 * cdf[j] };
    let mut j = 0;
    while j + 1 < reps / 2 && coverage(j + 1) >= 0.95 {
        j += 1;
    }
    (j, reps - 1 - j, coverage(j))
}

/// Writes `rep,checkpoint,edges,largest,second,deg_hist_json` rows.
pub fn write_traces_csv<W: Write>(mut w: W, traces: &[SimTrace]) -> std::io::Result<()> {
    writeln!(w, "rep,checkpoint,edges,largest,second,deg_hist_json")?;
    for tr in traces {
        for r in &tr.records {
            let hist = serde_json::to_string(&r.degree_hist).map_err(std::io::Error::other)?;
            writeln!(
                w,
                "{},{:.16e},{},{},{},\"{}\"",
                tr.stream,
                r.checkpoint,
                r.edges,
                r.largest,
                r.second,
                hist.replace('"', "\"\"")
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chi(d: usize) -> DegreeDistribution {
        DegreeDistribution::regular(d).unwrap()
    }

    #[test]
    fn triangle() {
        for seed in 0..20 {
            let t = simulate_discrete(&SimConfig::discrete(3, chi(2), seed, vec![])).unwrap();
            assert_eq!(t.final_edges, 3);
            assert_eq!(t.final_unsaturated, 0);
            assert_eq!(t.final_largest, 3);
        }
    }

    #[test]
    fn two_vertices() {
        let t = simulate_discrete(&SimConfig::discrete(2, chi(3), 1, vec![0.0, 0.5])).unwrap();
        assert_eq!(t.final_edges, 1);
        assert_eq!(t.final_unsaturated, 2);
        assert_eq!(t.records[1].edges, 1);
    }

    #[test]
    fn continuous_zero_is_empty() {
        let t = simulate_continuous(&SimConfig::continuous(500, chi(3), 4, vec![0.0])).unwrap();
        assert_eq!(t.records[0].edges, 0);
        assert_eq!(t.records[0].attempts, Some(0));
        assert_eq!(t.records[0].largest, 1);
    }

    #[test]
    fn histogram_sums_to_n() {
        let p: DegreeDistribution = "2:0.5,4:0.5".parse().unwrap();
        let t = simulate_discrete(&SimConfig::discrete(2000, p, 9, vec![0.25, 0.5, 1.0])).unwrap();
        for r in &t.records {
            let total: u32 = r.degree_hist.iter().flatten().sum();
            assert_eq!(total, 2000);
            assert_eq!(r.edges, (2000.0 * r.checkpoint) as u64);
        }
        assert!(t.records.windows(2).all(|w| w[0].largest <= w[1].largest));
    }

    #[test]
    fn deterministic() {
        let cfg = SimConfig::continuous(3000, chi(3), 77, vec![0.5, 1.0]);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig { stream: 1, ..cfg.clone() };
        assert_ne!(simulate(&cfg).unwrap().final_edges, 0);
        assert_ne!(simulate(&cfg).unwrap().records, simulate(&other).unwrap().records);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::discrete(1, chi(2), 0, vec![]).validate().is_err());
        assert!(SimConfig::discrete(10, chi(2), 0, vec![0.5, 0.2]).validate().is_err());
        assert!(SimConfig::discrete(10, chi(2), 0, vec![1.5]).validate().is_err());
        assert!(SimConfig::continuous(10, chi(2), 0, vec![1.5]).validate().is_ok());
    }

    #[test]
    fn median_interval_levels() {
        assert_eq!(median_interval(5), (0, 4, 0.9375));
        let (lo, hi, level) = median_interval(20);
        assert_eq!((lo, hi), (5, 14));
        assert!(level >= 0.95);
    }

    #[test]
    fn summary_counts_misses_as_infinite() {
        let c = vec![Some(0.6), None, Some(0.5), Some(0.7), None];
        let e = summarize_crossings(100, 0.05, c).unwrap();
        assert_eq!(e.median, 0.7);
        assert_eq!(e.ci_high, f64::INFINITY);
        let c = vec![Some(0.6), None, None, Some(0.7), None];
        assert_eq!(
            summarize_crossings(100, 0.05, c).unwrap_err(),
            SimError::ThresholdNeverReached { missed: 3, reps: 5 }
        );
        let e = summarize_crossings(100, 0.05, vec![Some(0.1), Some(0.4), Some(0.3), Some(0.2)]).unwrap();
        assert!((e.median - 0.25).abs() < 1e-15);
    }

    #[test]
    fn profile_at_zero() {
        let p = chi(3);
        let table = LambdaTable::build(&p, 5.0, 1e-10).unwrap();
        let prof = degree_profile_expected(&p, &table, 0.0).unwrap();
        assert!(prof.z.iter().all(|&z| z == 0.0));
        assert_eq!(prof.joint[3][0], 1.0);
        assert_eq!(prof.unsaturated(), 1.0);
    }

    #[test]
    fn profile_chi2_at_one() {
        let p = chi(2);
        let table = LambdaTable::build(&p, 5.0, 1e-10).unwrap();
        let prof = degree_profile_expected(&p, &table, 1.0).unwrap();
        let l = table.lambda(1.0).unwrap();
        assert_eq!(prof.z[1], (-l).exp() * l);
        assert!((prof.unsaturated() - table.lambda_prime(1.0).unwrap()).abs() < 1e-14);
    }
}
