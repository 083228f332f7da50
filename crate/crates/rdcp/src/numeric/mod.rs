//! Small numerical kernels shared by the solver modules.

mod ode;
mod quad;

pub use ode::{Dopri5, OdeError};
pub use quad::{adaptive_integrate, gl16, gl32, gl8, Cumulative, GaussLegendre};

/// Σ_{k=0}^{c.len()-1} x^k/k! · c[k], with the factorial folded into a running product.
#[inline]
pub fn poisson_sum(x: f64, c: &[f64]) -> f64 {
    let mut term = 1.0;
    let mut acc = 0.0;
    for (k, &ck) in c.iter().enumerate() {
        if k > 0 {
            term *= x / k as f64;
        }
        acc += term * ck;
    }
    acc
}

/// P(Poisson(x) ≥ m), accurate in both tails.
pub fn poisson_upper_tail(x: f64, m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x < m as f64 {
        // Terms beyond the mode decrease, so summing upward is stable.
        let mut term = (-x).exp();
        for j in 1..=m {
            term *= x / j as f64;
        }
        let mut acc = 0.0;
        let mut j = m;
        loop {
            acc += term;
            j += 1;
            term *= x / j as f64;
            if term <= acc * 1e-18 || term == 0.0 {
                break;
            }
        }
        acc
    } else {
        1.0 - poisson_lower_tail(x, m - 1)
    }
}

/// P(Poisson(x) ≤ m).
pub fn poisson_lower_tail(x: f64, m: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < (m + 1) as f64 {
        return 1.0 - poisson_upper_tail(x, m + 1);
    }
    let e = (-x).exp();
    let mut term = e;
    let mut acc = e;
    for j in 1..=m {
        term *= x / j as f64;
        acc += term;
    }
    acc
}
