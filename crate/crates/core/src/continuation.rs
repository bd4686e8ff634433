//! Steady states of the macro system with the resource stock held at `G0`:
//! Newton solver, pseudo-arclength continuation with fold detection and a
//! two-parameter scan for the cusp where two folds merge.

use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::macro_approx::{integrate_macro_with, MacroModel, MacroState};
use crate::ode::OdeOptions;
use crate::params::Params;

/// Dimension of the frozen system (`G` removed).
pub const DIM: usize = 8;

/// Arclength step below which a refused step is treated as a kink.
const KINK_DS: f64 = 1e-5;

type Vec8 = SVector<f64, DIM>;
type Mat8 = SMatrix<f64, DIM, DIM>;
type Vec9 = SVector<f64, 9>;
type Mat9 = SMatrix<f64, 9, 9>;

/// Continuation parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Param {
    Gamma,
    BD,
}

impl Param {
    pub fn get(self, p: &Params) -> f64 {
        match self {
            Param::Gamma => p.gamma,
            Param::BD => p.b_d,
        }
    }

    pub fn set(self, p: &mut Params, v: f64) {
        match self {
            Param::Gamma => p.gamma = v,
            Param::BD => p.b_d = v,
        }
    }
}

/// Macro system with `G = G0` fixed, as a function of one parameter.
#[derive(Debug, Clone, Copy)]
pub struct FrozenSystem {
    pub model: MacroModel,
    pub param: Param,
}

impl FrozenSystem {
    pub fn new(model: MacroModel, param: Param) -> Self {
        FrozenSystem {
            model: model.frozen(),
            param,
        }
    }

    /// Model at parameter value `v` (the imitation reference point is
    /// recomputed).
    pub fn model_at(&self, v: f64) -> Result<MacroModel> {
        let mut p = self.model.params;
        self.param.set(&mut p, v);
        self.model.with_params(&p)
    }

    pub fn value(&self) -> f64 {
        self.param.get(&self.model.params)
    }

    /// Same system with the other parameter changed.
    pub fn with(&self, param: Param, v: f64) -> Result<Self> {
        let mut p = self.model.params;
        param.set(&mut p, v);
        Ok(FrozenSystem {
            model: self.model.with_params(&p)?,
            param: self.param,
        })
    }

    pub fn to_macro(&self, u: &[f64]) -> MacroState {
        MacroState {
            x: u[0],
            y: u[1],
            z: u[2],
            kcc: u[3],
            kcd: u[4],
            kdc: u[5],
            kdd: u[6],
            c: u[7],
            g: self.model.params.g0,
        }
    }

    /// Right-hand side restricted to the eight free dimensions.
    pub fn residual(&self, u: &Vec8, v: f64) -> Result<Vec8> {
        let model = self.model_at(v)?;
        self.residual_with(&model, u)
    }

    fn residual_with(&self, model: &MacroModel, u: &Vec8) -> Result<Vec8> {
        let s = self.to_macro(u.as_slice());
        if !s.is_valid(model.params.g0, 1e-6) {
            return Err(Error::Domain("state outside the invariant polytope"));
        }
        let d = model.rhs_unchecked(&s)?;
        Ok(Vec8::from_fn(|i, _| d[i]))
    }

    /// Central-difference Jacobian with step `1e-6 max(|u_i|, 1)`.
    pub fn jacobian(&self, u: &Vec8, v: f64) -> Result<Mat8> {
        let model = self.model_at(v)?;
        self.jacobian_with(&model, u)
    }

    fn jacobian_with(&self, model: &MacroModel, u: &Vec8) -> Result<Mat8> {
        let mut j = Mat8::zeros();
        for k in 0..DIM {
            let h = 1e-6 * u[k].abs().max(1.0);
            let mut up = *u;
            let mut dn = *u;
            up[k] += h;
            dn[k] -= h;
            // one-sided at the polytope boundary
            let (fp, fm, width) = match (
                self.residual_with(model, &up),
                self.residual_with(model, &dn),
            ) {
                (Ok(a), Ok(b)) => (a, b, 2.0 * h),
                (Ok(a), Err(_)) => (a, self.residual_with(model, u)?, h),
                (Err(_), Ok(b)) => (self.residual_with(model, u)?, b, h),
                (Err(e), Err(_)) => return Err(e),
            };
            j.set_column(k, &((fp - fm) / width));
        }
        Ok(j)
    }

    /// Derivative of the residual with respect to the parameter.
    pub fn param_derivative(&self, u: &Vec8, v: f64) -> Result<Vec8> {
        let h = 1e-6 * v.abs().max(1.0);
        match (self.residual(u, v + h), self.residual(u, v - h)) {
            (Ok(fp), Ok(fm)) => Ok((fp - fm) / (2.0 * h)),
            // one-sided at the edge of the parameter domain
            (Ok(fp), Err(_)) => Ok((fp - self.residual(u, v)?) / h),
            (Err(_), Ok(fm)) => Ok((self.residual(u, v)? - fm) / h),
            (Err(e), Err(_)) => Err(e),
        }
    }

    /// Largest real part of the Jacobian's eigenvalues.
    pub fn max_real_eigenvalue(&self, u: &Vec8, v: f64) -> Result<f64> {
        let j = self.jacobian(u, v)?;
        Ok(max_real_part(&j))
    }
}

fn max_real_part(j: &Mat8) -> f64 {
    j.complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn min_abs_real_part(j: &Mat8) -> f64 {
    j.complex_eigenvalues()
        .iter()
        .filter(|c| c.im.abs() < 1e-9)
        .map(|c| c.re.abs())
        .fold(f64::INFINITY, f64::min)
}

/// Steady state on a branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub state: [f64; DIM],
    pub param: f64,
    pub arclength: f64,
    pub max_re_eig: f64,
    pub stable: bool,
    /// Parameter component of the unit tangent in scaled coordinates.
    pub tangent_param: f64,
    pub residual: f64,
}

impl BranchPoint {
    pub fn vector(&self) -> Vec8 {
        Vec8::from_column_slice(&self.state)
    }
}

/// Limit point where the branch turns back in the parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldPoint {
    pub param: f64,
    pub state: [f64; DIM],
    /// Smallest absolute real eigenvalue at the fold.
    pub critical_eig: f64,
}

/// Point where two fold curves meet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspPoint {
    pub gamma: f64,
    pub b_d: f64,
    pub state: [f64; DIM],
}

/// Newton settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Result of [`find_fixed_point`] with the residual history.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub point: BranchPoint,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

fn inf_norm(v: &Vec8) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Damped Newton iteration for a steady state at parameter `v`.
pub fn find_fixed_point(
    sys: &FrozenSystem,
    guess: &[f64; DIM],
    v: f64,
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    let model = sys.model_at(v)?;
    let mut u = Vec8::from_column_slice(guess);
    let mut f = sys.residual_with(&model, &u)?;
    let mut res = inf_norm(&f);
    let mut history = alloc::vec![res];
    let mut iterations = 0;
    while res >= opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let j = sys.jacobian_with(&model, &u)?;
        let du = j.lu().solve(&(-f)).ok_or(Error::NoConvergence {
            iterations,
            residual: res,
        })?;
        let mut lambda = 1.0;
        loop {
            let trial = u + du * lambda;
            if let Ok(ft) = sys.residual_with(&model, &trial) {
                let rt = inf_norm(&ft);
                if rt < res || lambda < 1e-3 {
                    u = trial;
                    f = ft;
                    res = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: res,
                });
            }
        }
        history.push(res);
    }
    let j = sys.jacobian_with(&model, &u)?;
    let max_re = max_real_part(&j);
    let mut state = [0.0; DIM];
    state.copy_from_slice(u.as_slice());
    Ok(NewtonReport {
        point: BranchPoint {
            state,
            param: v,
            arclength: 0.0,
            max_re_eig: max_re,
            stable: max_re < 0.0,
            tangent_param: 0.0,
            residual: res,
        },
        iterations,
        residuals: history,
    })
}

/// Integrates the frozen system from `init` for time `t` and returns the
/// final state; a convenient Newton guess.
pub fn relax(sys: &FrozenSystem, init: &MacroState, v: f64, t: f64) -> Result<[f64; DIM]> {
    let model = sys.model_at(v)?;
    let mut s = *init;
    s.g = model.params.g0;
    let opts = OdeOptions {
        rtol: 1e-9,
        atol: 1e-9,
        h_max: 5.0,
        ..OdeOptions::default()
    };
    let traj = integrate_macro_with(&s, &model, t, t, &opts)?;
    let last = traj
        .samples
        .last()
        .ok_or(Error::Contract("empty trajectory"))?;
    let s = MacroState::from_sample(last);
    Ok([s.x, s.y, s.z, s.kcc, s.kcd, s.kdc, s.kdd, s.c])
}

/// Step control of [`continue_branch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    /// Initial step in scaled arclength.
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    /// Fold location tolerance in the parameter.
    pub fold_tol: f64,
    pub newton_tol: f64,
    /// Initial direction of travel in the parameter (+1 or -1).
    pub direction: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            ds: 0.01,
            ds_min: 1e-7,
            ds_max: 0.05,
            max_points: 2000,
            fold_tol: 1e-6,
            newton_tol: 1e-10,
            direction: 1.0,
        }
    }
}

/// Why a continuation run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The parameter left the requested range.
    LeftRange,
    /// The step size fell below `ds_min`.
    StepCollapse,
    /// `max_points` reached.
    MaxPoints,
}

/// Branch with its folds.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub folds: Vec<FoldPoint>,
    pub stop: StopReason,
}

impl Branch {
    /// Smallest tangent parameter component along the branch and the
    /// parameter value where it occurs.
    pub fn min_tangent_param(&self) -> (f64, f64) {
        self.points.iter().map(|p| (p.tangent_param, p.param)).fold(
            (f64::INFINITY, f64::NAN),
            |a, b| if b.0 < a.0 { b } else { a },
        )
    }
}

/// Scaled coordinates: `xi_i = u_i / scale_i`, parameter unscaled.
#[derive(Debug, Clone, Copy)]
struct Scaling {
    s: Vec8,
}

impl Scaling {
    fn new(u: &Vec8) -> Self {
        Scaling {
            s: u.map(|a| a.abs().max(1.0)),
        }
    }

    fn scale(&self, u: &Vec8, v: f64) -> Vec9 {
        let mut w = Vec9::zeros();
        for i in 0..DIM {
            w[i] = u[i] / self.s[i];
        }
        w[DIM] = v;
        w
    }

    fn unscale(&self, w: &Vec9) -> (Vec8, f64) {
        (Vec8::from_fn(|i, _| w[i] * self.s[i]), w[DIM])
    }
}

/// Scaled residual and its 8x9 Jacobian.
fn scaled_system(
    sys: &FrozenSystem,
    sc: &Scaling,
    w: &Vec9,
) -> Result<(Vec8, SMatrix<f64, DIM, 9>, f64)> {
    let (u, v) = sc.unscale(w);
    let model = sys.model_at(v)?;
    let f = sys.residual_with(&model, &u)?;
    let ju = sys.jacobian_with(&model, &u)?;
    let jp = sys.param_derivative(&u, v)?;
    let mut j = SMatrix::<f64, DIM, 9>::zeros();
    for r in 0..DIM {
        for c in 0..DIM {
            j[(r, c)] = ju[(r, c)] * sc.s[c] / sc.s[r];
        }
        j[(r, DIM)] = jp[r] / sc.s[r];
    }
    let fs = Vec8::from_fn(|r, _| f[r] / sc.s[r]);
    Ok((fs, j, inf_norm(&f)))
}

fn tangent(j: &SMatrix<f64, DIM, 9>, prev: &Vec9) -> Option<Vec9> {
    let mut a = Mat9::zeros();
    for r in 0..DIM {
        for c in 0..9 {
            a[(r, c)] = j[(r, c)];
        }
    }
    for c in 0..9 {
        a[(DIM, c)] = prev[c];
    }
    let mut rhs = Vec9::zeros();
    rhs[DIM] = 1.0;
    let t = a.lu().solve(&rhs)?;
    let n = t.norm();
    if !(n > 0.0) || !n.is_finite() {
        return None;
    }
    Some(t / n)
}

/// Corrector: Newton on the residual plus the arclength condition
/// `t . (w - w_pred) = 0`.
fn correct(
    sys: &FrozenSystem,
    sc: &Scaling,
    w_pred: &Vec9,
    t: &Vec9,
    tol: f64,
) -> Option<(Vec9, SMatrix<f64, DIM, 9>, f64, usize)> {
    let mut w = *w_pred;
    for it in 0..40 {
        let (f, j, res) = scaled_system(sys, sc, &w).ok()?;
        let arc = t.dot(&(w - w_pred));
        let step_ok = it > 0 && res < tol;
        if step_ok {
            return Some((w, j, res, it));
        }
        let mut a = Mat9::zeros();
        let mut rhs = Vec9::zeros();
        for r in 0..DIM {
            for c in 0..9 {
                a[(r, c)] = j[(r, c)];
            }
            rhs[r] = -f[r];
        }
        for c in 0..9 {
            a[(DIM, c)] = t[c];
        }
        rhs[DIM] = -arc;
        let dw = a.lu().solve(&rhs)?;
        w += dw;
        if !w.iter().all(|a| a.is_finite()) {
            return None;
        }
        if dw.norm() < 1e-13 {
            let (_, j, res) = scaled_system(sys, sc, &w).ok()?;
            return if res < tol {
                Some((w, j, res, it + 1))
            } else {
                None
            };
        }
    }
    None
}

fn make_point(
    sys: &FrozenSystem,
    sc: &Scaling,
    w: &Vec9,
    t: &Vec9,
    arclength: f64,
    res: f64,
) -> Result<BranchPoint> {
    let (u, v) = sc.unscale(w);
    let j = sys.jacobian(&u, v)?;
    let max_re = max_real_part(&j);
    let mut state = [0.0; DIM];
    state.copy_from_slice(u.as_slice());
    Ok(BranchPoint {
        state,
        param: v,
        arclength,
        max_re_eig: max_re,
        stable: max_re < 0.0,
        tangent_param: t[DIM],
        residual: res,
    })
}

/// Pseudo-arclength continuation of a steady-state branch in the system's
/// parameter from `start` until the parameter leaves `[lo, hi]`.
pub fn continue_branch(
    sys: &FrozenSystem,
    start: &BranchPoint,
    lo: f64,
    hi: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let u0 = start.vector();
    let mut sc = Scaling::new(&u0);
    let mut w = sc.scale(&u0, start.param);
    let (_, j0, res0) = scaled_system(sys, &sc, &w)?;
    let mut guide = Vec9::zeros();
    guide[DIM] = opts.direction.signum();
    let mut t = tangent(&j0, &guide).ok_or(Error::NoConvergence {
        iterations: 0,
        residual: res0,
    })?;
    if t[DIM] * opts.direction < 0.0 {
        t = -t;
    }
    let mut points = alloc::vec![make_point(sys, &sc, &w, &t, 0.0, res0)?];
    let mut folds = Vec::new();
    let mut ds = opts.ds;
    let mut arclength = 0.0;
    let stop;
    loop {
        if points.len() >= opts.max_points {
            stop = StopReason::MaxPoints;
            break;
        }
        let w_pred = w + t * ds;
        // a smooth branch keeps its orientation and turns gradually; sharp
        // turns are refused and the step shortened
        let smooth = correct(sys, &sc, &w_pred, &t, opts.newton_tol)
            .and_then(|(w_new, j_new, res, iters)| Some((w_new, tangent(&j_new, &t)?, res, iters)))
            .map(|(w_new, t_new, res, iters)| {
                let t_new = if t_new.dot(&t) < 0.0 { -t_new } else { t_new };
                (w_new, t_new, res, iters)
            })
            .filter(|(_, t_new, _, _)| t_new.dot(&t) >= 0.9);
        let (w_new, t_new, res, iters) = match smooth {
            Some(s) => s,
            None => {
                ds *= 0.5;
                if ds >= opts.ds_min.max(KINK_DS) {
                    continue;
                }
                // stuck on a kink where an imitation probability saturates
                match natural_step(sys, &sc, &w, &t, opts) {
                    Some(s) => {
                        ds = opts.ds.min(1e-3);
                        s
                    }
                    None => {
                        stop = StopReason::StepCollapse;
                        break;
                    }
                }
            }
        };
        let prev_t = t;
        let prev_w = w;
        arclength += (w_new - w).norm();
        w = w_new;
        t = t_new;
        if prev_t[DIM] * t[DIM] < 0.0 {
            if let Some(f) = refine_fold(sys, &sc, &prev_w, &prev_t, &w, opts) {
                folds.push(f);
            }
        }
        // keep the scaled coordinates of order one as the branch moves
        let (u, v) = sc.unscale(&w);
        let next = Scaling::new(&u);
        let mut tn = t;
        for i in 0..DIM {
            tn[i] *= sc.s[i] / next.s[i];
        }
        sc = next;
        w = sc.scale(&u, v);
        t = tn / tn.norm();
        let pt = make_point(sys, &sc, &w, &t, arclength, res)?;
        points.push(pt);
        if pt.param < lo || pt.param > hi {
            stop = StopReason::LeftRange;
            break;
        }
        if iters <= 4 {
            ds = (ds * 1.3).min(opts.ds_max);
        } else if iters <= 10 {
            ds = (ds * 1.1).min(opts.ds_max);
        } else {
            ds *= 0.7;
        }
    }
    Ok(Branch {
        points,
        folds,
        stop,
    })
}

/// Fallback when the arclength corrector fails, typically on the kink where
/// an imitation probability saturates: a small step in the parameter
/// followed by a plain Newton solve.
fn natural_step(
    sys: &FrozenSystem,
    sc: &Scaling,
    w: &Vec9,
    t: &Vec9,
    opts: &ContinuationOptions,
) -> Option<(Vec9, Vec9, f64, usize)> {
    let (u, v) = sc.unscale(w);
    let mut guess = [0.0; DIM];
    guess.copy_from_slice(u.as_slice());
    let dir = if t[DIM] < 0.0 { -1.0 } else { 1.0 };
    let newton = NewtonOptions {
        tol: opts.newton_tol,
        ..NewtonOptions::default()
    };
    for delta in [1e-5, 1e-4, 1e-3] {
        let Ok(r) = find_fixed_point(sys, &guess, v + dir * delta, &newton) else {
            continue;
        };
        let w_new = sc.scale(&r.point.vector(), r.point.param);
        let (_, j, res) = scaled_system(sys, sc, &w_new).ok()?;
        let mut t_new = tangent(&j, t)?;
        // the state part of the tangent jumps across the kink, so orient
        // by the direction of travel in the parameter
        if t_new[DIM] * dir < 0.0 {
            t_new = -t_new;
        }
        return Some((w_new, t_new, res, r.iterations));
    }
    None
}

/// Locates the zero of the tangent's parameter component between two
/// accepted points by secant iteration on the arclength from `w_a`.
fn refine_fold(
    sys: &FrozenSystem,
    sc: &Scaling,
    w_a: &Vec9,
    t_a: &Vec9,
    w_b: &Vec9,
    opts: &ContinuationOptions,
) -> Option<FoldPoint> {
    let eval = |sigma: f64| -> Option<(Vec9, f64)> {
        let w_pred = w_a + t_a * sigma;
        let (w, j, _, _) = correct(sys, sc, &w_pred, t_a, opts.newton_tol)?;
        let mut t = tangent(&j, t_a)?;
        if t.dot(t_a) < 0.0 {
            t = -t;
        }
        Some((w, t[DIM]))
    };
    let mut s0 = 0.0;
    let mut f0 = t_a[DIM];
    let mut s1 = t_a.dot(&(w_b - w_a));
    let (mut w1, mut f1) = eval(s1)?;
    let mut last_param = w1[DIM];
    let mut best = (w1, f1);
    // Illinois-modified regula falsi keeps the bracket
    let mut side = 0i32;
    for _ in 0..60 {
        let s = s1 - f1 * (s1 - s0) / (f1 - f0);
        let (w, f) = eval(s)?;
        if f.abs() < best.1.abs() {
            best = (w, f);
        }
        if f * f1 < 0.0 {
            s0 = s1;
            f0 = f1;
            side = 0;
        } else {
            if side == 1 {
                f0 *= 0.5;
            }
            side = 1;
        }
        s1 = s;
        f1 = f;
        w1 = w;
        let converged = (w1[DIM] - last_param).abs() < opts.fold_tol * 1e-2 && f.abs() < 1e-6
            || (s1 - s0).abs() < 1e-12;
        last_param = w1[DIM];
        if converged {
            break;
        }
    }
    let (w, _) = best;
    let (u, v) = sc.unscale(&w);
    let j = sys.jacobian(&u, v).ok()?;
    let mut state = [0.0; DIM];
    state.copy_from_slice(u.as_slice());
    Some(FoldPoint {
        param: v,
        state,
        critical_eig: min_abs_real_part(&j),
    })
}

/// Folds of one branch for a fixed second parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSlice {
    pub b_d: f64,
    pub folds: Vec<f64>,
    /// Smallest tangent parameter component (negative iff the branch turns).
    pub min_tangent: f64,
    /// Parameter value where the smallest tangent component occurs.
    pub gamma_at_min: f64,
}

/// Result of [`cusp_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct CuspScan {
    pub slices: Vec<FoldSlice>,
    pub cusp: Option<CuspPoint>,
}

/// Branch over `gamma` in `[g_lo, g_hi]` at a given `b_d`, started from a
/// relaxed dirty-dominated state at `g_lo`.
pub fn gamma_branch(
    base: &FrozenSystem,
    b_d: f64,
    g_lo: f64,
    g_hi: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let sys = base.with(Param::BD, b_d)?;
    let sys = FrozenSystem {
        param: Param::Gamma,
        ..sys
    };
    let init = MacroState {
        x: -0.5,
        y: -0.5,
        z: 0.2,
        kcc: 100.0,
        kcd: 100.0,
        kdc: 100.0,
        kdd: 2000.0,
        c: 100.0,
        g: sys.model.params.g0,
    };
    let guess = relax(&sys, &init, g_lo, 2000.0)?;
    let start = find_fixed_point(&sys, &guess, g_lo, &NewtonOptions::default())?.point;
    continue_branch(&sys, &start, g_lo, g_hi, opts)
}

fn slice(
    base: &FrozenSystem,
    b_d: f64,
    g_lo: f64,
    g_hi: f64,
    opts: &ContinuationOptions,
) -> Result<FoldSlice> {
    let br = gamma_branch(base, b_d, g_lo, g_hi, opts)?;
    let (min_tangent, gamma_at_min) = br.min_tangent_param();
    Ok(FoldSlice {
        b_d,
        folds: br.folds.iter().map(|f| f.param).collect(),
        min_tangent,
        gamma_at_min,
    })
}

/// Traces the folds of the `gamma` branch over a grid of `b_d` values and
/// locates the cusp, where the two folds merge, by bisection on `b_d`
/// between the largest monostable and the smallest bistable grid value.
pub fn cusp_scan(
    base: &FrozenSystem,
    gamma_range: (f64, f64),
    bd_grid: &[f64],
    opts: &ContinuationOptions,
) -> Result<CuspScan> {
    let (g_lo, g_hi) = gamma_range;
    let mut slices = Vec::new();
    for &b in bd_grid {
        slices.push(slice(base, b, g_lo, g_hi, opts)?);
    }
    slices.sort_by(|a, b| a.b_d.total_cmp(&b.b_d));
    let bistable = |s: &FoldSlice| s.folds.len() >= 2;
    let bracket = slices
        .windows(2)
        .find(|w| !bistable(&w[0]) && bistable(&w[1]))
        .map(|w| (w[0].b_d, w[1].b_d));
    let Some((mut lo, mut hi)) = bracket else {
        return Ok(CuspScan { slices, cusp: None });
    };
    let fine = ContinuationOptions {
        ds_max: opts.ds_max.min(0.005),
        ..*opts
    };
    let mut upper = slice(base, hi, g_lo, g_hi, &fine)?;
    let mut lower = slice(base, lo, g_lo, g_hi, &fine)?;
    for _ in 0..40 {
        let sep = if upper.folds.len() >= 2 {
            (upper.folds[1] - upper.folds[0]).abs()
        } else {
            f64::INFINITY
        };
        if (sep < 1e-5 && hi - lo < 1e-4) || hi - lo < 1e-9 {
            break;
        }
        // secant on the smallest tangent component when it changes sign
        let mid = if upper.min_tangent < 0.0 && lower.min_tangent > 0.0 {
            let s = lo + (hi - lo) * lower.min_tangent / (lower.min_tangent - upper.min_tangent);
            s.clamp(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
        } else {
            0.5 * (lo + hi)
        };
        let sl = slice(base, mid, g_lo, g_hi, &fine)?;
        if bistable(&sl) || sl.min_tangent < 0.0 {
            hi = mid;
            upper = sl.clone();
        } else {
            lo = mid;
            lower = sl.clone();
        }
        slices.push(sl);
    }
    slices.sort_by(|a, b| a.b_d.total_cmp(&b.b_d));
    let gamma = if upper.folds.len() >= 2 {
        0.5 * (upper.folds[0] + upper.folds[1])
    } else {
        upper.gamma_at_min
    };
    let sys = base.with(Param::BD, hi)?;
    let sys = FrozenSystem {
        param: Param::Gamma,
        ..sys
    };
    let br = gamma_branch(base, hi, g_lo, g_hi, &fine)?;
    let nearest = br
        .points
        .iter()
        .min_by(|a, b| (a.param - gamma).abs().total_cmp(&(b.param - gamma).abs()))
        .ok_or(Error::Contract("empty branch"))?;
    let state = find_fixed_point(&sys, &nearest.state, gamma, &NewtonOptions::default())
        .map(|r| r.point.state)
        .unwrap_or(nearest.state);
    Ok(CuspScan {
        slices,
        cusp: Some(CuspPoint {
            gamma,
            b_d: 0.5 * (lo + hi),
            state,
        }),
    })
}

/// Time-forward check of a steady state: perturbs every component by
/// `rel` of its scale, integrates the frozen system for `t` and returns the
/// scaled distance to the steady state at the start and at the end.
pub fn time_forward_check(
    sys: &FrozenSystem,
    point: &BranchPoint,
    rel: f64,
    t: f64,
) -> Result<(f64, f64)> {
    let model = sys.model_at(point.param)?;
    let g0 = model.params.g0;
    let scale = point.state.map(|a| a.abs().max(1.0));
    let mut u = point.state;
    for i in 0..DIM {
        u[i] += rel * scale[i];
    }
    let mut init = sys.to_macro(&u);
    init.project(g0);
    let dist = |s: &MacroState| {
        let a = [s.x, s.y, s.z, s.kcc, s.kcd, s.kdc, s.kdd, s.c];
        (0..DIM).fold(0.0f64, |m, i| {
            m.max((a[i] - point.state[i]).abs() / scale[i])
        })
    };
    let d0 = dist(&init);
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-10,
        h_max: 5.0,
        ..OdeOptions::default()
    };
    let traj = integrate_macro_with(&init, &model, t, t, &opts)?;
    let last = traj
        .samples
        .last()
        .ok_or(Error::Contract("empty trajectory"))?;
    let end = MacroState::from_sample(last);
    Ok((d0, dist(&end)))
}
