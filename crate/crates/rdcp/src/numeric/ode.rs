use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    MaxSteps { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Dormand-Prince 5(4) with standard step control; outputs are hit exactly.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-12, h_init: 1e-4, max_steps: 2_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Dopri5 {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    /// Integrates y' = f(t, y) from (t0, y0) and returns the state at each of the
    /// ascending times in `t_out`.
    pub fn solve<F>(&self, mut f: F, t0: f64, y0: &[f64], t_out: &[f64]) -> Result<Vec<Vec<f64>>, OdeError>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y0.len();
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut h = self.h_init;
        let mut k = vec![vec![0.0; n]; 7];
        let mut tmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        let mut out = Vec::with_capacity(t_out.len());
        let mut steps = 0usize;
        f(t, &y, &mut k[0]);
        for &target in t_out {
            assert!(target >= t, "output times must be ascending");
            while t < target {
                steps += 1;
                if steps > self.max_steps {
                    return Err(OdeError::MaxSteps { t });
                }
                let last = h >= target - t;
                let hs = if last { target - t } else { h };
                for i in 0..n {
                    tmp[i] = y[i] + hs * A21 * k[0][i];
                }
                f(t + C2 * hs, &tmp, &mut k[1]);
                for i in 0..n {
                    tmp[i] = y[i] + hs * (A31 * k[0][i] + A32 * k[1][i]);
                }
                f(t + C3 * hs, &tmp, &mut k[2]);
                for i in 0..n {
                    tmp[i] = y[i] + hs * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
                }
                f(t + C4 * hs, &tmp, &mut k[3]);
                for i in 0..n {
                    tmp[i] = y[i] + hs * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
                }
                f(t + C5 * hs, &tmp, &mut k[4]);
                for i in 0..n {
                    tmp[i] =
                        y[i] + hs * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
                }
                f(t + hs, &tmp, &mut k[5]);
                for i in 0..n {
                    ynew[i] = y[i] + hs * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
                }
                f(t + hs, &ynew, &mut k[6]);
                let mut err = 0.0;
                for i in 0..n {
                    let e =
                        hs * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                    let sc = self.atol + self.rtol * y[i].abs().max(ynew[i].abs());
                    err += (e / sc).powi(2);
                }
                let err = (err / n as f64).sqrt();
                if !err.is_finite() {
                    h = 0.25 * hs;
                    if h < 1e-300 {
                        return Err(OdeError::NonFinite { t });
                    }
                    continue;
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err <= 1.0 {
                    t = if last { target } else { t + hs };
                    std::mem::swap(&mut y, &mut ynew);
                    k.swap(0, 6);
                    if !last || fac < 1.0 {
                        h = hs * fac;
                    }
                } else {
                    h = hs * fac.min(1.0);
                    if h <= 1e-14 * t.abs().max(1e-300) {
                        return Err(OdeError::StepSizeUnderflow { t });
                    }
                }
            }
            out.push(y.clone());
        }
        Ok(out)
    }
}
