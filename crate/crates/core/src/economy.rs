//! Two-sector production economy: market clearing and the deterministic
//! stock flows shared by the agent-based model and the macro description.

use crate::error::{Error, Result};
use crate::math::pow;
use crate::params::Params;

/// Aggregate stocks that determine the market outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EconomyStocks {
    pub k_c: f64,
    pub k_d: f64,
    /// Knowledge stock.
    pub c: f64,
    /// Fossil resource stock.
    pub g: f64,
}

/// Market-clearing prices and quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarketOutcome {
    pub w: f64,
    pub r_c: f64,
    pub r_d: f64,
    pub l_c: f64,
    pub l_d: f64,
    /// Resource flow.
    pub r: f64,
    pub y_c: f64,
    pub y_d: f64,
    pub x_c: f64,
    pub x_d: f64,
    pub x_r: f64,
    /// False once extraction cost exceeds the resource value.
    pub dirty_active: bool,
}

/// Solves the static market for given stocks.
///
/// Requires `rho = 1`, `mu = 2`. A dirty sector whose extraction cost exceeds
/// the value of the resource is shut down and all labour goes to the clean
/// sector. Rents of a sector without capital are 0.
pub fn solve_market(stocks: &EconomyStocks, p: &Params) -> Result<MarketOutcome> {
    if p.rho != 1.0 || p.mu != 2.0 {
        return Err(Error::InvalidParams(
            "closed-form market clearing requires rho = 1 and mu = 2",
        ));
    }
    let EconomyStocks { k_c, k_d, c, g } = *stocks;
    if !(k_c >= 0.0 && k_d >= 0.0 && c >= 0.0) {
        return Err(Error::Domain("negative stock"));
    }
    if !(g > 0.0) {
        return Err(Error::Domain("resource stock must be positive"));
    }
    let inv = 1.0 / (1.0 - p.alpha);
    let l = p.l_total;
    let alpha = p.alpha;

    let x_c = pow(p.b_c * pow(k_c, p.beta_c) * pow(c, p.gamma), inv);
    let x_d = pow(p.b_d * pow(k_d, p.beta_d), inv);
    let ratio = p.g0 / g;
    let bracket = 1.0 - p.b_r / p.e * ratio * ratio;
    let dirty_active = bracket > 0.0;
    let x_r = if dirty_active { pow(bracket, inv) } else { 0.0 };

    let dirty = x_d * x_r;
    let sum = x_c + dirty;
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::DegenerateEconomy);
    }
    let w = alpha * pow(l, alpha - 1.0) * pow(sum, 1.0 - alpha);
    // L^alpha * S^-alpha, common to outputs and rents
    let scale = pow(l / sum, alpha);
    let (l_c, l_d) = if dirty_active {
        (l * x_c / sum, l * dirty / sum)
    } else {
        (l, 0.0)
    };

    let y_c = x_c * scale;
    let r_c = if k_c > 0.0 { p.beta_c * y_c / k_c } else { 0.0 };
    let (r_d, y_d, r) = if dirty_active && k_d > 0.0 {
        let y_d = p.b_d * pow(k_d, p.beta_d) * pow(l_d, alpha);
        let r_d = p.beta_d * dirty * scale / k_d;
        (r_d, y_d, y_d / p.e)
    } else {
        (0.0, 0.0, 0.0)
    };

    Ok(MarketOutcome {
        w,
        r_c,
        r_d,
        l_c,
        l_d,
        r,
        y_c,
        y_d,
        x_c,
        x_d,
        x_r,
        dirty_active,
    })
}

/// Extraction cost `b_R R^rho (G0/G)^mu`.
pub fn resource_cost(r: f64, g: f64, p: &Params) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::Domain("resource stock must be positive"));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain("resource flow must be nonnegative"));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(p.b_r * pow(r, p.rho) * pow(p.g0 / g, p.mu))
}

/// Learning by doing with depreciation: `dC/dt = Y_c - chi C`.
pub fn knowledge_rhs(c: f64, y_c: f64, p: &Params) -> f64 {
    y_c - p.chi * c
}

/// Depletion: `dG/dt = -R`.
pub fn resource_rhs(market: &MarketOutcome) -> f64 {
    -market.r
}

/// Household income `w L_i + r_c K_c^(i) + r_d K_d^(i)`.
pub fn household_income(market: &MarketOutcome, labor: f64, k_c: f64, k_d: f64) -> f64 {
    market.w * labor + market.r_c * k_c + market.r_d * k_d
}
