use rdcp::sim::*;
use rdcp::{DegreeDistribution, LambdaTable};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn final_fraction(p: &DegreeDistribution, n: usize, reps: usize, seed: u64) -> Vec<f64> {
    let cfg = SimConfig::discrete(n, p.clone(), seed, vec![]);
    run_replicates(&cfg, reps).unwrap().iter().map(|t| t.final_edges as f64 / n as f64).collect()
}

#[test]
fn final_edge_counts() {
    let chi2 = DegreeDistribution::regular(2).unwrap();
    let m = final_fraction(&chi2, 10_000, 20, 11);
    assert!(m.iter().all(|&x| (0.98..=1.0).contains(&x)));
    let chi3 = DegreeDistribution::regular(3).unwrap();
    let (mean, _) = mean_se(&final_fraction(&chi3, 10_000, 20, 12));
    assert!((mean - 1.5).abs() < 0.02);
}

#[test]
fn debug_runs_respect_constraints() {
    // debug builds assert constraints on every insertion and compare union-find with BFS
    for (i, s) in ["2:1", "3:1", "2:0.5,5:0.5", "2:0.99,3:0.01"].iter().enumerate() {
        let p: DegreeDistribution = s.parse().unwrap();
        let cfg = SimConfig::discrete(5000, p.clone(), i as u64, vec![0.1, 0.4, 0.8, 0.95]);
        let t = simulate_discrete(&cfg).unwrap();
        for r in &t.records {
            for (k, row) in r.degree_hist.iter().enumerate() {
                assert!(row.len() <= k + 1);
            }
        }
        let cfg = SimConfig::continuous(5000, p, i as u64, vec![0.5, 1.0, 3.0]);
        let t = simulate_continuous(&cfg).unwrap();
        assert!(t.records.windows(2).all(|w| w[0].edges <= w[1].edges && w[0].largest <= w[1].largest));
    }
}

#[test]
fn continuous_attempt_rate() {
    let n = 20_000;
    let t_hat = 0.8;
    let cfg = SimConfig::continuous(n, DegreeDistribution::regular(3).unwrap(), 3, vec![t_hat]);
    let attempts: Vec<f64> =
        run_replicates(&cfg, 10).unwrap().iter().map(|t| t.records[0].attempts.unwrap() as f64).collect();
    let (m, se) = mean_se(&attempts);
    let expected = n as f64 * t_hat / 2.0;
    assert!((m - expected).abs() < 4.0 * se.max(1.0), "{m} vs {expected}");
}

#[test]
fn continuous_and_discrete_laws_agree() {
    // crossing edge counts and final edge counts are functions of the accepted-edge sequence
    let p = DegreeDistribution::regular(3).unwrap();
    let n = 4000;
    let sample = |mode: SimMode| {
        let cfg = SimConfig {
            mode,
            crossing_fraction: Some(0.05),
            checkpoints: if mode == SimMode::Continuous { vec![0.2] } else { vec![] },
            ..SimConfig::discrete(n, p.clone(), 21, vec![])
        };
        let traces = run_replicates(&cfg, 50).unwrap();
        let cross: Vec<f64> = traces.iter().map(|t| t.crossing.as_ref().unwrap().s).collect();
        let fin: Vec<f64> = traces.iter().map(|t| t.final_edges as f64).collect();
        (mean_se(&cross), mean_se(&fin))
    };
    let (dc, df) = sample(SimMode::Discrete);
    let (cc, cf) = sample(SimMode::Continuous);
    assert!((dc.0 - cc.0).abs() < 4.0 * (dc.1.powi(2) + cc.1.powi(2)).sqrt(), "{dc:?} {cc:?}");
    assert!((df.0 - cf.0).abs() < 4.0 * (df.1.powi(2) + cf.1.powi(2)).sqrt() + 1.0, "{df:?} {cf:?}");
}

#[test]
fn degree_profile_matches_simulation() {
    let p: DegreeDistribution = "2:0.3,3:0.4,4:0.3".parse().unwrap();
    let n = 40_000;
    let times = vec![0.5, 1.0, 2.0];
    let table = LambdaTable::build(&p, 3.0, 1e-10).unwrap();
    let t = simulate_continuous(&SimConfig::continuous(n, p.clone(), 8, times.clone())).unwrap();
    for (r, &t_hat) in t.records.iter().zip(&times) {
        let prof = degree_profile_expected(&p, &table, t_hat).unwrap();
        for (d, row) in r.degree_hist.iter().enumerate().skip(2) {
            for (j, &count) in row.iter().enumerate() {
                let f = prof.joint[d][j];
                let se = (f * (1.0 - f) / n as f64).sqrt();
                let got = count as f64 / n as f64;
                assert!((got - f).abs() <= 4.0 * se + 1e-12, "t̂={t_hat} d={d} j={j}: {got} vs {f}");
            }
        }
    }
}

#[test]
fn profile_unsaturated_mass_decreases() {
    let p: DegreeDistribution = "2:0.5,3:0.25,5:0.25".parse().unwrap();
    let table = LambdaTable::build(&p, 10.0, 1e-10).unwrap();
    let mut prev = f64::INFINITY;
    for i in 0..=40 {
        let t = 0.25 * i as f64;
        let prof = degree_profile_expected(&p, &table, t).unwrap();
        let total: f64 = prof.joint.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-13);
        assert!(prof.z.iter().sum::<f64>() <= 1.0);
        let u = prof.unsaturated();
        assert!((u - table.lambda_prime(t).unwrap()).abs() < 1e-13);
        assert!(u < prev);
        prev = u;
    }
    assert!(degree_profile_expected(&p, &table, 11.0).is_err());
}

#[test]
fn chi3_crossing() {
    let est = empirical_critical_time(&DegreeDistribution::regular(3).unwrap(), 20_000, 5, 0.05, 1).unwrap();
    assert!(est.median > 0.55 && est.median < 0.65, "{est:?}");
    assert!(est.ci_low <= est.median && est.median <= est.ci_high);
}

#[test]
fn almost_two_regular_crossing() {
    let p: DegreeDistribution = "2:0.99,3:0.01".parse().unwrap();
    let est = empirical_critical_time(&p, 100_000, 5, 0.02, 1).unwrap();
    assert!(est.median > 0.95 && est.median < 1.0, "{est:?}");
}

#[test]
fn crossing_input_checks() {
    let p = DegreeDistribution::regular(3).unwrap();
    assert!(matches!(empirical_critical_time(&p, 100, 4, 0.05, 0), Err(SimError::InvalidConfig(_))));
    assert!(matches!(empirical_critical_time(&p, 100, 5, 0.3, 0), Err(SimError::InvalidConfig(_))));
}

#[test]
fn csv_and_json() {
    let cfg = SimConfig::discrete(300, DegreeDistribution::regular(3).unwrap(), 5, vec![0.5, 1.0]);
    let traces = run_replicates(&cfg, 3).unwrap();
    let mut buf = Vec::new();
    write_traces_csv(&mut buf, &traces).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rep,checkpoint,edges,largest,second,deg_hist_json");
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[1].starts_with("0,5.0000000000000000e-1,150,"));
    let json = serde_json::to_string(&traces).unwrap();
    let back: Vec<SimTrace> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, traces);
}

#[test]
fn thread_cap_respected() {
    let cfg = SimConfig::discrete(500, DegreeDistribution::regular(3).unwrap(), 9, vec![0.5]);
    let a = run_replicates(&cfg, 4).unwrap();
    std::env::set_var(THREADS_ENV, "1");
    let b = run_replicates(&cfg, 4).unwrap();
    std::env::remove_var(THREADS_ENV);
    assert_eq!(a, b);
}
