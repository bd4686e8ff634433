//! Reduced macroscopic description: pair-approximated opinion dynamics on
//! `(x, y, z)`, cohort capital aggregates, linearised imitation
//! probabilities and the resulting deterministic ODE system.
//!
//! `x = (N_c - N_d) / N`, `y = ([cc] - [dd]) / M`, `z = [cd] / M`. Capital
//! aggregates are named sector first, cohort second (`kcd` is the clean
//! capital of the dirty cohort).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abm::SimState;
use crate::economy::{solve_market, EconomyStocks, MarketOutcome};
use crate::error::{Error, Result};
use crate::math::{ln, pow, ratio_or_zero};
use crate::network::Strategy;
use crate::ode::{Dopri5, OdeOptions};
use crate::params::Params;
use crate::trajectory::{sample_grid, Sample, Trajectory};

/// Reduced state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MacroState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub kcc: f64,
    pub kcd: f64,
    pub kdc: f64,
    pub kdd: f64,
    pub c: f64,
    pub g: f64,
}

impl MacroState {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.x, self.y, self.z, self.kcc, self.kcd, self.kdc, self.kdd, self.c, self.g,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        MacroState {
            x: v[0],
            y: v[1],
            z: v[2],
            kcc: v[3],
            kcd: v[4],
            kdc: v[5],
            kdd: v[6],
            c: v[7],
            g: v[8],
        }
    }

    /// Inverse of [`MacroModel::sample`]; needs at least one link.
    pub fn from_sample(s: &Sample) -> Self {
        let m = s.cc + s.dd + s.cd;
        MacroState {
            x: 2.0 * s.n_c - 1.0,
            y: ratio_or_zero(s.cc - s.dd, m),
            z: ratio_or_zero(s.cd, m),
            kcc: s.kcc,
            kcd: s.kcd,
            kdc: s.kdc,
            kdd: s.kdd,
            c: s.c,
            g: s.g,
        }
    }

    pub fn k_c(&self) -> f64 {
        self.kcc + self.kcd
    }

    pub fn k_d(&self) -> f64 {
        self.kdc + self.kdd
    }

    pub fn stocks(&self) -> EconomyStocks {
        EconomyStocks {
            k_c: self.k_c(),
            k_d: self.k_d(),
            c: self.c,
            g: self.g,
        }
    }

    /// Largest violation of the invariant polytope.
    pub fn polytope_violation(&self, g0: f64) -> f64 {
        let mut v: f64 = 0.0;
        v = v.max(self.x.abs() - 1.0);
        v = v.max(-self.z).max(self.z - 1.0);
        v = v.max(self.y.abs() - (1.0 - self.z));
        for k in [self.kcc, self.kcd, self.kdc, self.kdd, self.c, self.g] {
            v = v.max(-k);
        }
        v.max(self.g - g0)
    }

    pub fn is_valid(&self, g0: f64, tol: f64) -> bool {
        let v = self.polytope_violation(g0);
        v.is_finite() && v <= tol && self.to_array().iter().all(|a| a.is_finite())
    }

    /// Nearest point of the polytope in the simple clamp sense.
    pub fn project(&mut self, g0: f64) {
        self.x = self.x.clamp(-1.0, 1.0);
        self.z = self.z.clamp(0.0, 1.0);
        let ymax = 1.0 - self.z;
        self.y = self.y.clamp(-ymax, ymax);
        for k in [
            &mut self.kcc,
            &mut self.kcd,
            &mut self.kdc,
            &mut self.kdd,
            &mut self.c,
        ] {
            *k = k.max(0.0);
        }
        self.g = self.g.clamp(0.0, g0);
    }
}

/// How the consumption difference between a clean and a dirty household is
/// approximated from aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum IncomeDifference {
    /// Difference of mean household capital income per cohort:
    /// `(r_c Kcc + r_d Kdc) / N_c - (r_c Kcd + r_d Kdd) / N_d`. Labour income
    /// is equal for all households and cancels.
    #[default]
    CohortMean,
    /// Difference of cohort totals:
    /// `r_c (Kcc - Kcd) + r_d (Kdc - Kdd) + w L x`.
    CohortTotal,
}

/// Which right-hand side [`MacroModel::rhs`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RhsForm {
    /// First jump moment of the event catalog with `y`, `z` normalised by
    /// `M`, switching fluxes per cohort member, cohort labour shares and
    /// exploration split into flips `eps (1 - phi)` and rewires `eps phi`.
    #[default]
    Derived,
    /// Closed system with different conventions: `y`, `z`
    /// jumps normalised by `N`, switching fluxes `K W / N`, full labour in
    /// both investment terms, unsplit exploration rate `eps` for flips and
    /// rewires, and cohort-weighted clean capital in learning by doing.
    Literal,
}

impl RhsForm {
    /// Probabilities per activation of an exploration flip (fair coin) and
    /// an exploration rewire.
    pub fn noise_rates(self, p: &Params) -> (f64, f64) {
        match self {
            RhsForm::Derived => (p.epsilon * (1.0 - p.phi), p.epsilon * p.phi),
            RhsForm::Literal => (p.epsilon, p.epsilon),
        }
    }
}

/// Reference consumption `F0` around which the imitation probability is
/// linearised: half the sum of the household consumption in an all-clean
/// and an all-dirty steady state. The dirty term uses the closed form for
/// `beta_d = 1/2`.
pub fn reference_point_f0(p: &Params) -> Result<f64> {
    let denom = 1.0 - p.beta_c - p.gamma;
    if !(denom > 0.0) {
        return Err(Error::InvalidParams("need beta_c + gamma < 1"));
    }
    let resource = 1.0 - p.b_r / p.e;
    if !(resource >= 0.0) {
        return Err(Error::InvalidParams("need b_r <= e"));
    }
    let la = pow(p.l_total, p.alpha);
    let clean = pow(
        p.s * p.b_c * la / pow(p.kappa, p.beta_c + p.gamma),
        1.0 / denom,
    );
    let dirty_base = resource * p.b_d * la;
    let dirty = p.s / p.kappa * dirty_base * dirty_base;
    let f0 = (1.0 - p.s) / (2.0 * p.n as f64) * (clean + dirty);
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::InvalidParams(
            "reference consumption is not positive",
        ));
    }
    Ok(f0)
}

/// Linearised imitation probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImitationClosure {
    pub f0: f64,
    pub delta_f: f64,
    /// Probability that a clean household copies a dirty one.
    pub p_cd: f64,
    /// Probability that a dirty household copies a clean one.
    pub p_dc: f64,
    /// Whether either probability had to be clamped to `[0, 1]`.
    pub clamped: bool,
}

/// `p_cd = 1/2 - a/(4 F0) dF`, `p_dc = 1/2 + a/(4 F0) dF`, clamped to `[0, 1]`.
pub fn closed_probabilities(
    state: &MacroState,
    market: &MarketOutcome,
    f0: f64,
    p: &Params,
    income: IncomeDifference,
) -> ImitationClosure {
    let delta_f = match income {
        IncomeDifference::CohortMean => {
            let n = p.n as f64;
            let n_c = 0.5 * n * (1.0 + state.x);
            let n_d = 0.5 * n * (1.0 - state.x);
            ratio_or_zero(market.r_c * state.kcc + market.r_d * state.kdc, n_c)
                - ratio_or_zero(market.r_c * state.kcd + market.r_d * state.kdd, n_d)
        }
        IncomeDifference::CohortTotal => {
            market.r_c * (state.kcc - state.kcd)
                + market.r_d * (state.kdc - state.kdd)
                + market.w * p.l_total * state.x
        }
    };
    let shift = p.a / (4.0 * f0) * delta_f;
    let raw_cd = 0.5 - shift;
    let raw_dc = 0.5 + shift;
    let p_cd = raw_cd.clamp(0.0, 1.0);
    let p_dc = raw_dc.clamp(0.0, 1.0);
    ImitationClosure {
        f0,
        delta_f,
        p_cd,
        p_dc,
        clamped: p_cd != raw_cd || p_dc != raw_dc,
    }
}

/// Events of the pair-based proxy process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventId {
    ImitateCleanToDirty,
    ImitateDirtyToClean,
    RewireByClean,
    RewireByDirty,
    NoiseFlipCleanToDirty,
    NoiseFlipDirtyToClean,
    /// Clean household moves a `cd` link to a clean household.
    NoiseRewireCdToCc,
    /// Clean household moves a `cc` link to a dirty household.
    NoiseRewireCcToCd,
    /// Dirty household moves a `cd` link to a dirty household.
    NoiseRewireCdToDd,
    /// Dirty household moves a `dd` link to a clean household.
    NoiseRewireDdToCd,
}

/// Cohort change caused by an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Switch {
    CleanToDirty,
    DirtyToClean,
    None,
}

/// Rate and jump of one event in unscaled variables `(X, Y, Z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventCatalogEntry {
    pub id: EventId,
    pub rate: f64,
    pub jump: [f64; 3],
    pub switch: Switch,
}

/// Enumerates all events with their pair-approximated rates and expected
/// jumps for a system of `p.n` households and `m * p.n` links.
pub fn event_catalog(
    state: &MacroState,
    closure: &ImitationClosure,
    p: &Params,
    m: f64,
    form: RhsForm,
) -> [EventCatalogEntry; 10] {
    let n = p.n as f64;
    let links = m * n;
    let MacroState { x, y, z, .. } = *state;
    let n_c = 0.5 * n * (1.0 + x);
    let n_d = 0.5 * n * (1.0 - x);
    let cc = 0.5 * links * (1.0 + y - z);
    let dd = 0.5 * links * (1.0 - y - z);
    let cd = links * z;
    let stubs_c = 2.0 * cc + cd;
    let stubs_d = 2.0 * dd + cd;
    // neighbour of a clean (dirty) household is dirty (clean) / alike
    let c_sees_d = ratio_or_zero(cd, stubs_c);
    let c_sees_c = ratio_or_zero(2.0 * cc, stubs_c);
    let d_sees_c = ratio_or_zero(cd, stubs_d);
    let d_sees_d = ratio_or_zero(2.0 * dd, stubs_d);
    let k_c = ratio_or_zero(stubs_c, n_c);
    let k_d = ratio_or_zero(stubs_d, n_d);
    let share_c = n_c / n;
    let share_d = n_d / n;

    let activations = n / p.tau;
    let regular = 1.0 - p.epsilon;
    let (flip, rewire) = form.noise_rates(p);

    let entry = |id, rate: f64, jump, switch| EventCatalogEntry {
        id,
        rate: rate.max(0.0),
        jump,
        switch,
    };
    [
        entry(
            EventId::ImitateCleanToDirty,
            activations * regular * (1.0 - p.phi) * share_c * c_sees_d * closure.p_cd,
            [
                -2.0,
                -k_c,
                -1.0 + ratio_or_zero((k_c - 1.0) * (2.0 * cc - cd), stubs_c),
            ],
            Switch::CleanToDirty,
        ),
        entry(
            EventId::ImitateDirtyToClean,
            activations * regular * (1.0 - p.phi) * share_d * d_sees_c * closure.p_dc,
            [
                2.0,
                k_d,
                -1.0 + ratio_or_zero((k_d - 1.0) * (2.0 * dd - cd), stubs_d),
            ],
            Switch::DirtyToClean,
        ),
        entry(
            EventId::RewireByClean,
            activations * regular * p.phi * share_c * c_sees_d,
            [0.0, 1.0, -1.0],
            Switch::None,
        ),
        entry(
            EventId::RewireByDirty,
            activations * regular * p.phi * share_d * d_sees_c,
            [0.0, -1.0, -1.0],
            Switch::None,
        ),
        entry(
            EventId::NoiseFlipCleanToDirty,
            activations * flip * share_c * 0.5,
            [-2.0, -k_c, ratio_or_zero(2.0 * cc - cd, n_c)],
            Switch::CleanToDirty,
        ),
        entry(
            EventId::NoiseFlipDirtyToClean,
            activations * flip * share_d * 0.5,
            [2.0, k_d, ratio_or_zero(2.0 * dd - cd, n_d)],
            Switch::DirtyToClean,
        ),
        entry(
            EventId::NoiseRewireCdToCc,
            activations * rewire * share_c * c_sees_d * share_c,
            [0.0, 1.0, -1.0],
            Switch::None,
        ),
        entry(
            EventId::NoiseRewireCcToCd,
            activations * rewire * share_c * c_sees_c * share_d,
            [0.0, -1.0, 1.0],
            Switch::None,
        ),
        entry(
            EventId::NoiseRewireCdToDd,
            activations * rewire * share_d * d_sees_c * share_d,
            [0.0, -1.0, -1.0],
            Switch::None,
        ),
        entry(
            EventId::NoiseRewireDdToCd,
            activations * rewire * share_d * d_sees_d * share_c,
            [0.0, 1.0, 1.0],
            Switch::None,
        ),
    ]
}

/// Macro model: parameters, closure choices and derived constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroModel {
    pub params: Params,
    /// Links per household, `M / N`.
    pub m: f64,
    /// Reference consumption of the imitation closure.
    pub f0: f64,
    pub form: RhsForm,
    pub income: IncomeDifference,
    /// Hold the resource at `G0` (`dG/dt = 0`).
    pub frozen_resource: bool,
}

impl MacroModel {
    /// Model with `m = mean_degree / 2`, the derived right-hand side and
    /// cohort-mean income differences.
    pub fn new(p: &Params) -> Result<Self> {
        p.validate_closed_form()?;
        Ok(MacroModel {
            params: *p,
            m: p.links_per_household(),
            f0: reference_point_f0(p)?,
            form: RhsForm::default(),
            income: IncomeDifference::default(),
            frozen_resource: false,
        })
    }

    pub fn with_form(mut self, form: RhsForm) -> Self {
        self.form = form;
        self
    }

    pub fn with_income(mut self, income: IncomeDifference) -> Self {
        self.income = income;
        self
    }

    pub fn with_links_per_household(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn frozen(mut self) -> Self {
        self.frozen_resource = true;
        self
    }

    /// Replaces the parameters and recomputes `F0`.
    pub fn with_params(mut self, p: &Params) -> Result<Self> {
        p.validate_closed_form()?;
        self.params = *p;
        self.f0 = reference_point_f0(p)?;
        Ok(self)
    }

    fn market_stocks(&self, s: &MacroState) -> EconomyStocks {
        EconomyStocks {
            k_c: s.k_c().max(0.0),
            k_d: s.k_d().max(0.0),
            c: s.c.max(0.0),
            g: if self.frozen_resource {
                self.params.g0
            } else {
                s.g
            },
        }
    }

    pub fn market(&self, s: &MacroState) -> Result<MarketOutcome> {
        solve_market(&self.market_stocks(s), &self.params)
    }

    pub fn closure(&self, s: &MacroState, market: &MarketOutcome) -> ImitationClosure {
        closed_probabilities(s, market, self.f0, &self.params, self.income)
    }

    /// Time derivative of the state. Rejects states outside the invariant
    /// polytope (tolerance `1e-8`).
    pub fn rhs(&self, s: &MacroState) -> Result<[f64; 9]> {
        if !s.is_valid(self.params.g0, 1e-8) {
            return Err(Error::Domain("macro state outside the invariant polytope"));
        }
        self.rhs_unchecked(s)
    }

    /// As [`MacroModel::rhs`] without the polytope check.
    pub fn rhs_unchecked(&self, s: &MacroState) -> Result<[f64; 9]> {
        let market = self.market(s)?;
        let cl = self.closure(s, &market);
        Ok(match self.form {
            RhsForm::Derived => self.derived(s, &market, &cl),
            RhsForm::Literal => self.verbatim(s, &market, &cl),
        })
    }

    fn derived(&self, s: &MacroState, mk: &MarketOutcome, cl: &ImitationClosure) -> [f64; 9] {
        let p = &self.params;
        let m = self.m;
        let tau = p.tau;
        let MacroState { x, y, z, .. } = *s;
        let a = (1.0 - p.epsilon) * (1.0 - p.phi);
        let b = (1.0 - p.epsilon) * p.phi;
        let (f, r) = RhsForm::Derived.noise_rates(p);
        let hc = 0.5 * (1.0 + x);
        let hd = 0.5 * (1.0 - x);
        // neighbour of a clean household is dirty / clean, and vice versa
        let qc = ratio_or_zero(z, 1.0 + y);
        let uc = ratio_or_zero(1.0 + y - z, 1.0 + y);
        let qd = ratio_or_zero(z, 1.0 - y);
        let ud = ratio_or_zero(1.0 - y - z, 1.0 - y);
        let (pcd, pdc) = (cl.p_cd, cl.p_dc);

        let dx = (2.0 * a * (hd * qd * pdc - hc * qc * pcd) - f * x) / tau;

        let noise_rw_y = hc * qc * hc - hc * uc * hd - hd * qd * hd + hd * ud * hc;
        let noise_rw_z = -hc * qc * hc + hc * uc * hd - hd * qd * hd + hd * ud * hc;
        let dy = (a * ((1.0 - y) * qd * pdc - (1.0 + y) * qc * pcd) - f * y) / tau
            + b * (hc * qc - hd * qd) / (m * tau)
            + r * noise_rw_y / (m * tau);

        let imit_c = -(1.0 + x) + (2.0 * m * (1.0 + y) - (1.0 + x)) * (1.0 - 2.0 * qc);
        let imit_d = -(1.0 - x) + (2.0 * m * (1.0 - y) - (1.0 - x)) * (1.0 - 2.0 * qd);
        let dz = a * (pcd * qc * imit_c + pdc * qd * imit_d) / (2.0 * m * tau)
            + f * (1.0 - 2.0 * z) / tau
            - b * (hc * qc + hd * qd) / (m * tau)
            + r * noise_rw_z / (m * tau);

        // per-member switching rates out of the clean / dirty cohort
        let out_c = a * qc * pcd / tau + 0.5 * f / tau;
        let out_d = a * qd * pdc / tau + 0.5 * f / tau;
        let wl = mk.w * p.l_total;
        let dkcc =
            p.s * (mk.r_c * s.kcc + mk.r_d * s.kdc + wl * hc) - p.kappa * s.kcc - out_c * s.kcc
                + out_d * s.kcd;
        let dkcd = -p.kappa * s.kcd + out_c * s.kcc - out_d * s.kcd;
        let dkdc = -p.kappa * s.kdc - out_c * s.kdc + out_d * s.kdd;
        let dkdd = p.s * (mk.r_c * s.kcd + mk.r_d * s.kdd + wl * hd) - p.kappa * s.kdd
            + out_c * s.kdc
            - out_d * s.kdd;
        let dc = mk.y_c - p.chi * s.c;
        let dg = if self.frozen_resource { 0.0 } else { -mk.r };
        [dx, dy, dz, dkcc, dkcd, dkdc, dkdd, dc, dg]
    }

    fn verbatim(&self, s: &MacroState, mk: &MarketOutcome, cl: &ImitationClosure) -> [f64; 9] {
        let p = &self.params;
        let m = self.m;
        let tau = p.tau;
        let eps = p.epsilon;
        let phi = p.phi;
        let delta = p.kappa;
        let MacroState { x, y, z, .. } = *s;
        let (pcd, pdc) = (cl.p_cd, cl.p_dc);
        let ap = (eps - 1.0) * (phi - 1.0);
        let (l, w, r_c, r_d, sv) = (p.l_total, mk.w, mk.r_c, mk.r_d, p.s);
        // z / (y + 1) and z / (y - 1)
        let zp = ratio_or_zero(z, y + 1.0);
        let zm = ratio_or_zero(z, y - 1.0);

        let dx = -eps * x / tau - pcd * zp * ap * (x + 1.0) / tau + pdc * zm * ap * (x - 1.0) / tau;

        let bm = 0.25 * eps * z * (x - 1.0) - 0.25 * eps * (x + 1.0) * (y + z - 1.0)
            + 0.5 * phi * z * (eps - 1.0);
        let bp = 0.25 * eps * z * (x + 1.0) + 0.25 * eps * (x - 1.0) * (y - z + 1.0)
            - 0.5 * phi * z * (eps - 1.0);
        let term_m = (x - 1.0) * ratio_or_zero(bm, y - 1.0) / tau;
        let term_p = (x + 1.0) * ratio_or_zero(bp, y + 1.0) / tau;

        let dy = -m * (pcd * z * ap - pdc * z * ap + 0.5 * eps * (y - 1.0) + 0.5 * eps * (y + 1.0))
            / tau
            + term_m
            + term_p;

        let sq = |num: f64, d: f64| if d.abs() < 1e-12 { 0.0 } else { num / (d * d) };
        let dz = -eps * m * (2.0 * z - 1.0) / tau
            - 0.5
                * pcd
                * ap
                * sq(
                    z * ((x + 1.0) * (y + 1.0)
                        - 2.0 * (y - 2.0 * z + 1.0) * (m * y + m - 0.5 * x - 0.5)),
                    y + 1.0,
                )
                / tau
            - 0.5
                * pdc
                * ap
                * sq(
                    z * ((x - 1.0) * (y - 1.0)
                        - 2.0 * (y + 2.0 * z - 1.0) * (m * y - m - 0.5 * x + 0.5)),
                    y - 1.0,
                )
                / tau
            + term_m
            - term_p;

        // (pcd z ap + eps (y+1)/2) / (y+1) and (pdc z ap - eps (y-1)/2) / (y-1)
        let out_c = pcd * ap * zp + 0.5 * eps;
        let out_d = pdc * ap * zm - 0.5 * eps;
        let kcc = s.kcc;
        let kcd = s.kcd;
        let kdc = s.kdc;
        let kdd = s.kdd;
        let dkcc = kcc * (-delta + r_c * sv) + kdc * r_d * sv + l * sv * w
            - 0.5 * kcc * (x + 1.0) * out_c / tau
            + 0.5 * kcd * (x - 1.0) * out_d / tau;
        let dkdd = kdd * (-delta + r_d * sv)
            + kcd * r_c * sv
            + l * sv * w
            + 0.5 * kdc * (x + 1.0) * out_c / tau
            - 0.5 * kdd * (x - 1.0) * out_d / tau;
        let dkdc = -kdc * delta - 0.5 * kdc * (x + 1.0) * out_c / tau
            + 0.5 * kdd * (x - 1.0) * out_d / tau;
        let dkcd = -kcd * delta + 0.5 * kcc * (x + 1.0) * out_c / tau
            - 0.5 * kcd * (x - 1.0) * out_d / tau;

        let weighted = kcc * (0.5 * x + 0.5) + kcd * (0.5 - 0.5 * x);
        let y_c = p.b_c
            * pow(s.c.max(0.0), p.gamma)
            * pow(mk.l_c, p.alpha)
            * pow(weighted.max(0.0), p.beta_c);
        let dc = -p.chi * s.c + y_c;
        let dg = if self.frozen_resource { 0.0 } else { -mk.r };
        [dx, dy, dz, dkcc, dkcd, dkdc, dkdd, dc, dg]
    }

    /// Drift assembled directly from [`event_catalog`]: `sum_j dS_j W_j`,
    /// rescaled, plus switching fluxes, investment, learning and depletion
    /// terms. Uses the normalisation conventions of `self.form`.
    pub fn event_sum_rhs(&self, s: &MacroState) -> Result<[f64; 9]> {
        let p = &self.params;
        let market = self.market(s)?;
        let cl = self.closure(s, &market);
        let cat = event_catalog(s, &cl, p, self.m, self.form);
        let n = p.n as f64;
        let links = self.m * n;
        let yz_scale = match self.form {
            RhsForm::Derived => links,
            RhsForm::Literal => n,
        };
        let (mut dx, mut dy, mut dz) = (0.0, 0.0, 0.0);
        let (mut leave_c, mut leave_d) = (0.0, 0.0);
        for e in &cat {
            dx += e.jump[0] * e.rate / n;
            dy += e.jump[1] * e.rate / yz_scale;
            dz += e.jump[2] * e.rate / yz_scale;
            match e.switch {
                Switch::CleanToDirty => leave_c += e.rate,
                Switch::DirtyToClean => leave_d += e.rate,
                Switch::None => {}
            }
        }
        let hc = 0.5 * (1.0 + s.x);
        let hd = 0.5 * (1.0 - s.x);
        let (pool_c, pool_d, lab_c, lab_d) = match self.form {
            RhsForm::Derived => (n * hc, n * hd, hc, hd),
            RhsForm::Literal => (n, n, 1.0, 1.0),
        };
        // capital carried per switching household
        let per_c = |k: f64| ratio_or_zero(k, pool_c) * leave_c;
        let per_d = |k: f64| ratio_or_zero(k, pool_d) * leave_d;
        let mk = &market;
        let wl = mk.w * p.l_total;
        let dkcc =
            p.s * (mk.r_c * s.kcc + mk.r_d * s.kdc + wl * lab_c) - p.kappa * s.kcc - per_c(s.kcc)
                + per_d(s.kcd);
        let dkcd = -p.kappa * s.kcd + per_c(s.kcc) - per_d(s.kcd);
        let dkdc = -p.kappa * s.kdc - per_c(s.kdc) + per_d(s.kdd);
        let dkdd = p.s * (mk.r_c * s.kcd + mk.r_d * s.kdd + wl * lab_d) - p.kappa * s.kdd
            + per_c(s.kdc)
            - per_d(s.kdd);
        let clean_capital = match self.form {
            RhsForm::Derived => s.k_c(),
            RhsForm::Literal => hc * s.kcc + hd * s.kcd,
        };
        let y_c = p.b_c
            * pow(s.c.max(0.0), p.gamma)
            * pow(mk.l_c, p.alpha)
            * pow(clean_capital.max(0.0), p.beta_c);
        let dc = y_c - p.chi * s.c;
        let dg = if self.frozen_resource { 0.0 } else { -mk.r };
        Ok([dx, dy, dz, dkcc, dkcd, dkdc, dkdd, dc, dg])
    }

    /// Aggregate observables of a macro state in the trajectory schema.
    pub fn sample(&self, t: f64, s: &MacroState) -> Result<Sample> {
        let mk = self.market(s)?;
        let links = self.m * self.params.n as f64;
        Ok(Sample {
            t,
            n_c: 0.5 * (1.0 + s.x),
            k_c: s.k_c(),
            k_d: s.k_d(),
            kcc: s.kcc,
            kcd: s.kcd,
            kdc: s.kdc,
            kdd: s.kdd,
            c: s.c,
            g: s.g,
            w: mk.w,
            r_c: mk.r_c,
            r_d: mk.r_d,
            y_c: mk.y_c,
            y_d: mk.y_d,
            cc: 0.5 * links * (1.0 + s.y - s.z),
            dd: 0.5 * links * (1.0 - s.y - s.z),
            cd: links * s.z,
        })
    }
}

/// Integrates the macro system from `init`, sampling every `sample_dt` on
/// `[0, t_end]`. States drifting out of the polytope by less than `1e-8`
/// are projected back; larger excursions are reported as errors.
pub fn integrate_macro(
    init: &MacroState,
    model: &MacroModel,
    t_end: f64,
    sample_dt: f64,
) -> Result<Trajectory> {
    let opts = OdeOptions {
        rtol: 1e-7,
        atol: 1e-9,
        h_max: sample_dt,
        ..OdeOptions::default()
    };
    integrate_macro_with(init, model, t_end, sample_dt, &opts)
}

/// As [`integrate_macro`] with explicit tolerances.
pub fn integrate_macro_with(
    init: &MacroState,
    model: &MacroModel,
    t_end: f64,
    sample_dt: f64,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    if !(t_end >= 0.0 && sample_dt > 0.0) {
        return Err(Error::Contract("need t_end >= 0 and sample_dt > 0"));
    }
    let g0 = model.params.g0;
    if !init.is_valid(g0, 1e-8) {
        return Err(Error::Domain(
            "initial macro state outside the invariant polytope",
        ));
    }
    let mut start = *init;
    start.project(g0);
    let mut y = start.to_array();
    let mut ode = Dopri5::new(9);
    let mut traj = Trajectory::new();
    let grid = sample_grid(t_end, sample_dt);
    let mut t = 0.0;
    let mut excursion: Option<f64> = None;
    for &ts in &grid {
        if ts > t {
            ode.integrate_with(
                |_, u, du| {
                    let mut st = MacroState::from_slice(u);
                    st.project(g0);
                    du.copy_from_slice(&model.rhs_unchecked(&st)?);
                    Ok(())
                },
                t,
                ts,
                &mut y,
                opts,
                |tt, u| {
                    let mut st = MacroState::from_slice(u);
                    let v = st.polytope_violation(g0);
                    if v > 1e-8 && excursion.is_none() {
                        excursion = Some(tt);
                    }
                    if v > 0.0 {
                        st.project(g0);
                        u.copy_from_slice(&st.to_array());
                        true
                    } else {
                        false
                    }
                },
            )?;
            if let Some(tt) = excursion {
                return Err(Error::OutsidePolytope { t: tt });
            }
            t = ts;
        }
        traj.samples
            .push(model.sample(ts, &MacroState::from_slice(&y))?);
    }
    Ok(traj)
}

/// Exact reduction of a microscopic state to macro variables.
pub fn micro_to_macro(sim: &SimState) -> MacroState {
    let n = sim.n();
    let (mut kcc, mut kcd, mut kdc, mut kdd) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let h = sim.household(i);
        match h.strategy {
            Strategy::Clean => {
                kcc += h.k_c;
                kdc += h.k_d;
            }
            Strategy::Dirty => {
                kcd += h.k_c;
                kdd += h.k_d;
            }
        }
    }
    let nc = sim.net.n_with(Strategy::Clean) as f64;
    let nf = n as f64;
    let links = sim.net.counts();
    let total = links.total() as f64;
    let (y, z) = if total > 0.0 {
        (
            (links.cc as f64 - links.dd as f64) / total,
            links.cd as f64 / total,
        )
    } else {
        (0.0, 0.0)
    };
    MacroState {
        x: (2.0 * nc - nf) / nf,
        y,
        z,
        kcc,
        kcd,
        kdc,
        kdd,
        c: sim.knowledge(),
        g: sim.resource(),
    }
}

/// Simulates the pair-based proxy jump process of [`event_catalog`] with
/// `model.params.n` households and `round(m n)` links.
///
/// Activations arrive at rate `N / tau`; each selects catalog event `j`
/// with probability `W_j tau / N` (the rest are null). A switching
/// household carries the mean capital of its cohort. Capital, knowledge
/// and resource evolve deterministically between activations.
pub fn simulate_pbp(
    init: &MacroState,
    model: &MacroModel,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    let p = model.params;
    if model.form != RhsForm::Derived {
        return Err(Error::Contract(
            "the proxy process uses the derived conventions",
        ));
    }
    let n = p.n as f64;
    let links = libm::round(model.m * n);
    let model = model.with_links_per_household(links / n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = *init;
    // unscaled social state
    let mut big_x = libm::round(state.x * n);
    let mut big_y = state.y * links;
    let mut big_z = state.z * links;
    let mut econ = [state.kcc, state.kcd, state.kdc, state.kdd, state.c, state.g];
    let mut ode = Dopri5::new(6);
    let opts = OdeOptions {
        rtol: 1e-7,
        atol: 1e-9,
        h_max: 0.1,
        ..OdeOptions::default()
    };
    let grid = sample_grid(t_end, sample_dt);
    let mut traj = Trajectory::new();
    let rate = n / p.tau;
    let mut t = 0.0;
    let mut t_event = -ln(1.0 - rng.random::<f64>()) / rate;
    let mut next = 0;

    let sync = |st: &mut MacroState, bx: f64, by: f64, bz: f64, e: &[f64; 6]| {
        st.x = bx / n;
        st.y = by / links;
        st.z = bz / links;
        st.kcc = e[0];
        st.kcd = e[1];
        st.kdc = e[2];
        st.kdd = e[3];
        st.c = e[4];
        st.g = e[5];
    };

    while next < grid.len() {
        let target = grid[next].min(t_event);
        if target > t {
            let x_now = big_x / n;
            ode.integrate(
                |_, u, du| {
                    let st = MacroState {
                        x: x_now,
                        kcc: u[0].max(0.0),
                        kcd: u[1].max(0.0),
                        kdc: u[2].max(0.0),
                        kdd: u[3].max(0.0),
                        c: u[4],
                        g: u[5],
                        ..MacroState::default()
                    };
                    let mk = model.market(&st)?;
                    let hc = 0.5 * (1.0 + x_now);
                    let hd = 0.5 * (1.0 - x_now);
                    let wl = mk.w * p.l_total;
                    du[0] = p.s * (mk.r_c * u[0] + mk.r_d * u[2] + wl * hc) - p.kappa * u[0];
                    du[1] = -p.kappa * u[1];
                    du[2] = -p.kappa * u[2];
                    du[3] = p.s * (mk.r_c * u[1] + mk.r_d * u[3] + wl * hd) - p.kappa * u[3];
                    du[4] = mk.y_c - p.chi * u[4];
                    du[5] = if model.frozen_resource { 0.0 } else { -mk.r };
                    Ok(())
                },
                t,
                target,
                &mut econ,
                &opts,
            )?;
            t = target;
        }
        sync(&mut state, big_x, big_y, big_z, &econ);
        if grid[next] <= t_event {
            traj.samples.push(model.sample(grid[next], &state)?);
            next += 1;
            continue;
        }
        // activation
        let mk = model.market(&state)?;
        let cl = model.closure(&state, &mk);
        let cat = event_catalog(&state, &cl, &model.params, model.m, RhsForm::Derived);
        let mut u = rng.random::<f64>() * rate;
        let mut chosen = None;
        for e in &cat {
            if u < e.rate {
                chosen = Some(*e);
                break;
            }
            u -= e.rate;
        }
        if let Some(e) = chosen {
            let n_c = 0.5 * (n + big_x);
            let n_d = 0.5 * (n - big_x);
            match e.switch {
                Switch::CleanToDirty if n_c >= 1.0 => {
                    for (from, to) in [(0, 1), (2, 3)] {
                        let moved = econ[from] / n_c;
                        econ[from] -= moved;
                        econ[to] += moved;
                    }
                }
                Switch::DirtyToClean if n_d >= 1.0 => {
                    for (from, to) in [(1, 0), (3, 2)] {
                        let moved = econ[from] / n_d;
                        econ[from] -= moved;
                        econ[to] += moved;
                    }
                }
                _ => {}
            }
            big_x = (big_x + e.jump[0]).clamp(-n, n);
            big_z = (big_z + e.jump[2]).clamp(0.0, links);
            big_y = (big_y + e.jump[1]).clamp(-(links - big_z), links - big_z);
            ode.reset_step();
        }
        t_event = t + -ln(1.0 - rng.random::<f64>()) / rate;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MacroModel {
        MacroModel::new(&Params::default()).unwrap()
    }

    #[test]
    fn f0_at_defaults() {
        let p = Params::default();
        let f0 = reference_point_f0(&p).unwrap();
        // (1-s)/(2N) [ (s b_c L^a / kappa^(b+g))^(1/(1-b-g)) + s/kappa ((1-b_R/e) b_d L^a)^2 ]
        let clean = libm::pow(0.25 * 10.0 / libm::pow(0.06, 0.6), 2.5);
        let dirty = 0.25 / 0.06 * (0.9 * 40.0) * (0.9 * 40.0);
        let expect = 0.75 / 400.0 * (clean + dirty);
        assert!((f0 - expect).abs() < 1e-12 * expect);
        assert!((f0 - 11.386).abs() < 1e-3);
    }

    #[test]
    fn f0_without_dirty_term() {
        let p = Params {
            b_r: 1.0,
            e: 1.0,
            ..Params::default()
        };
        let f0 = reference_point_f0(&p).unwrap();
        let expect = 0.75 / 400.0 * libm::pow(0.25 * 10.0 / libm::pow(0.06, 0.6), 2.5);
        assert!((f0 - expect).abs() < 1e-12 * expect);
        assert!(reference_point_f0(&Params {
            gamma: 0.6,
            ..Params::default()
        })
        .is_err());
    }

    #[test]
    fn symmetric_state_has_even_odds() {
        let md = model();
        let s = MacroState {
            x: 0.0,
            y: 0.0,
            z: 0.5,
            kcc: 50.0,
            kcd: 50.0,
            kdc: 80.0,
            kdd: 80.0,
            c: 1.0,
            g: 1e6,
        };
        let mk = md.market(&s).unwrap();
        for income in [IncomeDifference::CohortMean, IncomeDifference::CohortTotal] {
            let cl = closed_probabilities(&s, &mk, md.f0, &md.params, income);
            assert_eq!((cl.p_cd, cl.p_dc), (0.5, 0.5));
        }
        let d = md.rhs(&s).unwrap();
        assert!(d[0].abs() < 1e-15);
    }

    #[test]
    fn cohort_total_matches_direct_substitution() {
        let md = model();
        let s = MacroState {
            x: 0.2,
            y: 0.1,
            z: 0.4,
            kcc: 30.0,
            kcd: 10.0,
            kdc: 5.0,
            kdd: 40.0,
            c: 2.0,
            g: 9e5,
        };
        let mk = md.market(&s).unwrap();
        let cl = closed_probabilities(&s, &mk, md.f0, &md.params, IncomeDifference::CohortTotal);
        let n_c = 120.0;
        let n_d = 80.0;
        let df = mk.r_c * 20.0 + mk.r_d * (-35.0) + mk.w * (100.0 / 200.0) * (n_c - n_d);
        let raw = 0.5 - 8.0 / (4.0 * md.f0) * df;
        assert!((cl.p_cd - raw.clamp(0.0, 1.0)).abs() < 1e-14);
        assert!((cl.p_cd + cl.p_dc - 1.0).abs() < 1e-14 || cl.clamped);
    }

    #[test]
    fn reference_rate_and_jump() {
        // N = 200, N_c = 100, [cc] = 500, [cd] = 1000, M = 2000
        let p = Params::default();
        let s = MacroState {
            x: 0.0,
            y: 0.0,
            z: 0.5,
            ..MacroState::default()
        };
        let cl = ImitationClosure {
            f0: 1.0,
            delta_f: 0.0,
            p_cd: 0.5,
            p_dc: 0.5,
            clamped: false,
        };
        let cat = event_catalog(&s, &cl, &p, 10.0, RhsForm::Derived);
        let e = cat[0];
        assert_eq!(e.id, EventId::ImitateCleanToDirty);
        assert!((e.rate - 11.875).abs() < 1e-12);
        // k_c = 20, (2[cc] - [cd]) = 0
        assert_eq!(e.jump, [-2.0, -20.0, -1.0]);
    }

    #[test]
    fn no_discordant_links_no_social_change() {
        let p = Params {
            epsilon: 0.0,
            ..Params::default()
        };
        let s = MacroState {
            x: 0.3,
            y: 0.2,
            z: 0.0,
            ..MacroState::default()
        };
        let cl = ImitationClosure {
            f0: 1.0,
            delta_f: 0.0,
            p_cd: 0.7,
            p_dc: 0.3,
            clamped: false,
        };
        for e in event_catalog(&s, &cl, &p, 5.0, RhsForm::Derived) {
            assert_eq!(e.rate, 0.0, "{:?}", e.id);
        }
    }

    #[test]
    fn clean_switching_flux_cancels() {
        let md = model();
        let s = MacroState {
            x: -0.3,
            y: -0.2,
            z: 0.3,
            kcc: 30.0,
            kcd: 12.0,
            kdc: 7.0,
            kdd: 90.0,
            c: 3.0,
            g: 8e5,
        };
        let mk = md.market(&s).unwrap();
        for form in [RhsForm::Derived, RhsForm::Literal] {
            let d = md.with_form(form).rhs(&s).unwrap();
            let lab = match form {
                RhsForm::Derived => 0.5 * (1.0 + s.x),
                RhsForm::Literal => 1.0,
            };
            let invest = md.params.s * (mk.r_c * s.kcc + mk.r_d * s.kdc + mk.w * 100.0 * lab);
            let expect = invest - md.params.kappa * (s.kcc + s.kcd);
            assert!((d[3] + d[4] - expect).abs() < 1e-10 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn clean_world_without_noise_decays_uninvested_holdings() {
        let p = Params {
            epsilon: 0.0,
            ..Params::default()
        };
        let md = MacroModel::new(&p).unwrap();
        // no dirty households and nobody switches: legacy dirty holdings of
        // the clean cohort only depreciate
        let init = MacroState {
            x: 1.0,
            y: 1.0,
            z: 0.0,
            kcc: 100.0,
            kcd: 0.0,
            kdc: 50.0,
            kdd: 0.0,
            c: 1.0,
            g: p.g0,
        };
        let traj = integrate_macro(&init, &md, 10.0, 1.0).unwrap();
        for smp in &traj.samples {
            let decay = libm::exp(-p.kappa * smp.t);
            assert!((smp.kdc - 50.0 * decay).abs() < 1e-6 * 50.0);
            assert_eq!((smp.kcd, smp.kdd), (0.0, 0.0));
            assert_eq!(smp.n_c, 1.0);
        }
    }

    #[test]
    fn rejects_states_outside_polytope() {
        let md = model();
        let s = MacroState {
            x: 0.0,
            y: 0.8,
            z: 0.5,
            kcc: 1.0,
            kcd: 1.0,
            kdc: 1.0,
            kdd: 1.0,
            c: 1.0,
            g: 1e6,
        };
        assert!(md.rhs(&s).is_err());
    }
}
