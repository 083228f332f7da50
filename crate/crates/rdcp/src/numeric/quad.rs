use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..m.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(m, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub fn gl8() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(8))
}

pub fn gl16() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(16))
}

pub fn gl32() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(32))
}

/// Globally adaptive bisection driven by a 16-point rule against its two halves.
pub fn adaptive_integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = gl16().integrate(a, m, &mut *f);
        let right = gl16().integrate(m, b, &mut *f);
        let both = left + right;
        if depth >= 40 || (both - whole).abs() <= tol.max(1e-15 * both.abs()) {
            return both;
        }
        rec(f, a, m, left, 0.5 * tol, depth + 1) + rec(f, m, b, right, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    let whole = gl16().integrate(a, b, &mut f);
    rec(&mut f, a, b, whole, tol, 0)
}

type SharedFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Running integral F(x) = ∫₀ˣ f on [0, x_max]; panel prefixes are stored so each
/// evaluation costs one partial 16-point rule.
#[derive(Clone)]
pub struct Cumulative {
    f: SharedFn,
    width: f64,
    prefix: Vec<f64>,
}

impl Cumulative {
    pub fn new(f: SharedFn, x_max: f64, width: f64) -> Self {
        assert!(x_max >= 0.0 && width > 0.0);
        let panels = ((x_max / width).ceil() as usize).max(1);
        let mut prefix = Vec::with_capacity(panels + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for j in 0..panels {
            let a = j as f64 * width;
            acc += gl16().integrate(a, a + width, |x| f(x));
            prefix.push(acc);
        }
        Self { f, width, prefix }
    }

    pub fn upper(&self) -> f64 {
        (self.prefix.len() - 1) as f64 * self.width
    }

    pub fn integrand(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        assert!(
            (0.0..=self.upper()).contains(&x),
            "cumulative integral evaluated at {x} outside [0, {}]",
            self.upper()
        );
        let j = ((x / self.width) as usize).min(self.prefix.len() - 2);
        let a = j as f64 * self.width;
        if x == a {
            return self.prefix[j];
        }
        self.prefix[j] + gl16().integrate(a, x, |s| (self.f)(s))
    }
}
