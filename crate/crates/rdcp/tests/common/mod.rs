//! Independent oracles: plain series and fixed-step RK4, sharing no code with the crate.

#![allow(dead_code)]

/// p_k for k = 0..=Δ from a list of (k, p_k).
pub fn law(pairs: &[(usize, f64)]) -> Vec<f64> {
    let delta = pairs.iter().map(|p| p.0).max().unwrap();
    let mut p = vec![0.0; delta + 1];
    for &(k, v) in pairs {
        p[k] = v;
    }
    p
}

fn tail(p: &[f64], k: usize) -> f64 {
    p.iter().skip(k).sum()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Σ_k x^k/k! c(k) for k in 0..len.
fn series(x: f64, len: usize, c: impl Fn(usize) -> f64) -> f64 {
    (0..len).map(|k| x.powi(k as i32) / factorial(k) * c(k)).sum()
}

pub fn big_p(p: &[f64], x: f64) -> f64 {
    series(x, p.len() - 1, |k| tail(p, k + 1))
}

pub fn lambda_prime(p: &[f64], l: f64) -> f64 {
    (-l).exp() * big_p(p, l)
}

/// Ĩ(λ) = e^{−λ} Σ_k λ^k/k! q_{k+2}
pub fn survival(p: &[f64], l: f64) -> f64 {
    (-l).exp() * series(l, p.len(), |k| tail(p, k + 2))
}

pub fn hazard(p: &[f64], l: f64) -> f64 {
    lambda_prime(p, l) * (-l).exp() * series(l, p.len(), |k| p.get(k + 2).copied().unwrap_or(0.0))
}

pub fn rk4<const N: usize>(f: impl Fn(&[f64; N]) -> [f64; N], y: [f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| {
        let mut o = *a;
        for i in 0..N {
            o[i] += s * b[i];
        }
        o
    };
    let k1 = f(&y);
    let k2 = f(&add(&y, &k1, h / 2.0));
    let k3 = f(&add(&y, &k2, h / 2.0));
    let k4 = f(&add(&y, &k3, h));
    let mut o = y;
    for i in 0..N {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

/// λ(t) by RK4 with step h.
pub fn lambda_at(p: &[f64], t: f64, h: f64) -> f64 {
    let steps = (t / h).ceil() as usize;
    let h = t / steps as f64;
    let mut y = [0.0];
    for _ in 0..steps {
        y = rk4(|y| [lambda_prime(p, y[0])], y, h);
    }
    y[0]
}

/// t̂_c by shooting: the first root of w′ − Ĩ(λ) w along w″ = −H w, w(0)=0, w′(0)=1.
pub fn shooting_t_hat_c(p: &[f64], h: f64, t_stop: f64) -> Option<f64> {
    let f = |y: &[f64; 3]| [lambda_prime(p, y[0]), y[2], -hazard(p, y[0]) * y[1]];
    let g = |y: &[f64; 3]| y[2] - survival(p, y[0]) * y[1];
    let mut t = 0.0;
    let mut y = [0.0, 0.0, 1.0];
    while t < t_stop {
        let next = rk4(f, y, h);
        if g(&next) <= 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if g(&rk4(f, y, mid)) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(t + 0.5 * (lo + hi));
        }
        y = next;
        t += h;
    }
    None
}

/// ½ ∫₀^{t̂} λ′² dt by RK4 on (λ, ∫λ′²).
pub fn discrete_time(p: &[f64], t_hat: f64, h: f64) -> f64 {
    let steps = (t_hat / h).ceil() as usize;
    let h = t_hat / steps as f64;
    let mut y = [0.0, 0.0];
    for _ in 0..steps {
        y = rk4(
            |y| {
                let lp = lambda_prime(p, y[0]);
                [lp, lp * lp]
            },
            y,
            h,
        );
    }
    0.5 * y[1]
}

/// Composite Simpson rule.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}
