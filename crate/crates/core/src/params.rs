//! Model constants.

use crate::error::{Error, Result};

/// All model constants. Defaults are the reference parameter set of the
/// model with imitation sharpness `a = 8` and mean degree 10.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Params {
    /// Number of households.
    pub n: usize,
    /// Mean degree of the initial acquaintance network. The link count
    /// `M` is taken from the realised graph; `M / N = mean_degree / 2`
    /// for the macro description.
    pub mean_degree: f64,
    /// Total factor productivity, clean sector.
    pub b_c: f64,
    /// Total factor productivity, dirty sector.
    pub b_d: f64,
    /// Initial resource extraction cost coefficient.
    pub b_r: f64,
    /// Resource conversion efficiency.
    pub e: f64,
    /// Capital depreciation rate.
    pub kappa: f64,
    /// Knowledge depreciation rate.
    pub chi: f64,
    /// Knowledge elasticity of clean production.
    pub gamma: f64,
    /// Labour elasticity (both sectors).
    pub alpha: f64,
    /// Capital elasticity, clean sector.
    pub beta_c: f64,
    /// Capital elasticity, dirty sector.
    pub beta_d: f64,
    /// Probability that a discordant encounter rewires instead of imitating.
    pub phi: f64,
    /// Mean waiting time between activations of one household.
    pub tau: f64,
    /// Fraction of random (exploration) events.
    pub epsilon: f64,
    /// Initial resource stock.
    pub g0: f64,
    /// Total labour.
    pub l_total: f64,
    /// Savings rate.
    pub s: f64,
    /// Resource flow exponent of the extraction cost.
    pub rho: f64,
    /// Resource stock exponent of the extraction cost.
    pub mu: f64,
    /// Imitation sharpness.
    pub a: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n: 200,
            mean_degree: 10.0,
            b_c: 1.0,
            b_d: 4.0,
            b_r: 0.1,
            e: 1.0,
            kappa: 0.06,
            chi: 0.1,
            gamma: 0.1,
            alpha: 0.5,
            beta_c: 0.5,
            beta_d: 0.5,
            phi: 0.5,
            tau: 1.0,
            epsilon: 0.05,
            g0: 1e6,
            l_total: 100.0,
            s: 0.25,
            rho: 1.0,
            mu: 2.0,
            a: 8.0,
        }
    }
}

impl Params {
    /// Checks ranges: stocks and rates strictly positive, `phi` and
    /// `epsilon` in `[0, 1]`, `s` in `(0, 1)`.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.mean_degree, "mean_degree must be > 0"),
            (self.b_c, "b_c must be > 0"),
            (self.b_d, "b_d must be > 0"),
            (self.b_r, "b_r must be > 0"),
            (self.e, "e must be > 0"),
            (self.kappa, "kappa must be > 0"),
            (self.chi, "chi must be > 0"),
            (self.alpha, "alpha must be > 0"),
            (self.beta_c, "beta_c must be > 0"),
            (self.beta_d, "beta_d must be > 0"),
            (self.tau, "tau must be > 0"),
            (self.g0, "g0 must be > 0"),
            (self.l_total, "l_total must be > 0"),
            (self.a, "a must be > 0"),
            (self.mu, "mu must be > 0"),
        ];
        for (value, msg) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParams(msg));
            }
        }
        if self.n < 2 {
            return Err(Error::InvalidParams("n must be >= 2"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParams("gamma must be >= 0"));
        }
        if !(self.alpha < 1.0) {
            return Err(Error::InvalidParams("alpha must be < 1"));
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(Error::InvalidParams("phi must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParams("epsilon must lie in [0, 1]"));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParams("s must lie in (0, 1)"));
        }
        if !(self.rho >= 1.0) {
            return Err(Error::InvalidParams("rho must be >= 1"));
        }
        Ok(())
    }

    /// The closed-form market solution needs `rho = 1` and `mu = 2`.
    pub fn validate_closed_form(&self) -> Result<()> {
        self.validate()?;
        if self.rho != 1.0 || self.mu != 2.0 {
            return Err(Error::InvalidParams(
                "closed-form market clearing requires rho = 1 and mu = 2",
            ));
        }
        Ok(())
    }

    /// Labour endowment of one household.
    pub fn labor_per_household(&self) -> f64 {
        self.l_total / self.n as f64
    }

    /// Links per household, `M / N`.
    pub fn links_per_household(&self) -> f64 {
        0.5 * self.mean_degree
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Params::default().validate_closed_form().unwrap();
    }

    #[test]
    fn rejects_general_cost_exponents_for_closed_form() {
        let p = Params {
            mu: 3.0,
            ..Params::default()
        };
        assert!(p.validate().is_ok());
        assert!(p.validate_closed_form().is_err());
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        for p in [
            Params {
                phi: 1.2,
                ..Params::default()
            },
            Params {
                epsilon: -0.1,
                ..Params::default()
            },
            Params {
                s: 1.0,
                ..Params::default()
            },
        ] {
            assert!(p.validate().is_err());
        }
    }
}
