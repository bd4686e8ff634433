//! Embedded Runge–Kutta 5(4) integrator (Dormand–Prince) with adaptive steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on any step.
    pub h_max: f64,
    /// Steps below `h_min * max(1, |t|)` abort the integration.
    pub h_min: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-6,
            atol: 1e-9,
            h_max: f64::INFINITY,
            h_min: 1e-14,
        }
    }
}

/// Counters accumulated over the lifetime of an integrator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: u64,
    pub rejected: u64,
    pub evaluations: u64,
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// difference between fifth- and fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Reusable Dormand–Prince workspace.
///
/// The last accepted step size is remembered across calls to
/// [`Dopri5::integrate`], which matters when integrating over many short
/// intervals.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    dim: usize,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    h: Option<f64>,
    stats: OdeStats,
}

impl Dopri5 {
    pub fn new(dim: usize) -> Self {
        Dopri5 {
            dim,
            k: core::array::from_fn(|_| vec![0.0; dim]),
            y_stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
            h: None,
            stats: OdeStats::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stats(&self) -> OdeStats {
        self.stats
    }

    /// Forgets the remembered step size.
    pub fn reset_step(&mut self) {
        self.h = None;
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1` in place.
    pub fn integrate<F>(
        &mut self,
        f: F,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        opts: &OdeOptions,
    ) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        self.integrate_with(f, t0, t1, y, opts, |_, _| false)
    }

    /// Like [`Dopri5::integrate`], calling `post_step(t, y)` after every
    /// accepted step. The hook may modify `y` (e.g. a projection) and must
    /// then return `true`.
    pub fn integrate_with<F, P>(
        &mut self,
        mut f: F,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        opts: &OdeOptions,
        mut post_step: P,
    ) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
        P: FnMut(f64, &mut [f64]) -> bool,
    {
        if y.len() != self.dim {
            return Err(Error::Contract("state dimension mismatch"));
        }
        let span = t1 - t0;
        if span < 0.0 {
            return Err(Error::Contract("integration interval must be forward"));
        }
        if span == 0.0 {
            return Ok(());
        }
        let mut t = t0;
        f(t, y, &mut self.k[0])?;
        self.stats.evaluations += 1;
        let mut h = self.h.unwrap_or(span).min(opts.h_max).min(span);
        loop {
            let remaining = t1 - t;
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            let err = self.trial_step(&mut f, t, h, y, opts)?;
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                if post_step(t, y) {
                    f(t, y, &mut self.k[0])?;
                    self.stats.evaluations += 1;
                }
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0)
                };
                // do not let a short final step shrink the remembered size
                let proposal = (h * fac).min(opts.h_max);
                if !last || proposal > self.h.unwrap_or(0.0) {
                    self.h = Some(proposal);
                }
                if last {
                    return Ok(());
                }
                h = proposal;
            } else {
                self.stats.rejected += 1;
                let fac = (0.9 * libm::pow(err, -0.2)).clamp(0.1, 0.9);
                h *= fac;
                self.h = Some(h);
                if h < opts.h_min * t.abs().max(1.0) {
                    return Err(Error::StepSizeUnderflow {
                        t,
                        state: y.to_vec(),
                    });
                }
            }
        }
    }

    /// One Dormand–Prince step of size `h` from `(t, y)`, with `k[0] = f(t, y)`.
    /// Leaves the proposal in `y_new`, its derivative in `k[6]`, and returns
    /// the scaled error norm.
    fn trial_step<F>(
        &mut self,
        f: &mut F,
        t: f64,
        h: f64,
        y: &[f64],
        opts: &OdeOptions,
    ) -> Result<f64>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = self.dim;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ys = &mut self.y_stage;
        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, ys, k2)?;
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, ys, k3)?;
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, ys, k4)?;
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, ys, k5)?;
        for i in 0..n {
            ys[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, ys, k6)?;
        let yn = &mut self.y_new;
        for i in 0..n {
            yn[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, yn, k7)?;
        self.stats.evaluations += 6;

        let mut acc = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(yn[i].abs());
            let q = e / sc;
            acc += q * q;
        }
        let err = sqrt(acc / n as f64);
        if err.is_finite() && yn.iter().all(|v| v.is_finite()) {
            Ok(err)
        } else {
            Ok(f64::INFINITY)
        }
    }
}
