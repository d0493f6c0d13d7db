//! Link/variance families and the quasi-likelihood derivatives along the
//! linear predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear predictors are clamped to `[-U_MAX, U_MAX]` before evaluation.
pub const U_MAX: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Identity link, constant variance.
    #[default]
    Identity,
    /// Logit link, binomial variance `mu (1 - mu)`.
    Logit,
}

/// Selector for [`Family::link_eval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFn {
    /// g(mu)
    Link,
    /// g^{-1}(u)
    Inverse,
    /// g'(mu)
    Deriv1,
    /// g''(mu)
    Deriv2,
    /// V(mu)
    Variance,
    /// V'(mu)
    VarianceDeriv,
}

#[inline]
fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `(sigma(u), 1 - sigma(u))` from a single exponential, both to full
/// relative precision.
#[inline]
fn logistic_pair(u: f64) -> (f64, f64) {
    let e = (-u.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e * big;
    if u >= 0.0 {
        (big, small)
    } else {
        (small, big)
    }
}

impl Family {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" | "gaussian" | "identity-gaussian" => Ok(Family::Identity),
            "logit" | "binomial" | "logit-binomial" => Ok(Family::Logit),
            other => Err(Error::Config(format!("unknown link family `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Identity => "identity",
            Family::Logit => "logit",
        }
    }

    pub fn clamp(self, u: f64) -> f64 {
        match self {
            Family::Identity => u,
            Family::Logit => u.clamp(-U_MAX, U_MAX),
        }
    }

    pub fn check_response(self, y: f64) -> Result<()> {
        match self {
            Family::Identity if y.is_finite() => Ok(()),
            Family::Logit if y == 0.0 || y == 1.0 => Ok(()),
            _ => Err(Error::Domain(format!(
                "response {y} outside the support of the {} family",
                self.name()
            ))),
        }
    }

    #[inline]
    pub fn inverse_link(self, u: f64) -> f64 {
        match self {
            Family::Identity => u,
            Family::Logit => logistic(self.clamp(u)),
        }
    }

    /// `(Q_1, Q_2)`: first and second derivative of `u -> Q(g^{-1}(u), y)`.
    /// The response is assumed to be in the family's support.
    #[inline]
    pub fn q_derivs_unchecked(self, u: f64, y: f64) -> (f64, f64) {
        match self {
            Family::Identity => (y - u, -1.0),
            Family::Logit => {
                let (mu, one_minus_mu) = logistic_pair(self.clamp(u));
                (y - mu, -mu * one_minus_mu)
            }
        }
    }

    pub fn q_derivs(self, u: f64, y: f64) -> Result<(f64, f64)> {
        self.check_response(y)?;
        if u.is_nan() {
            return Err(Error::Numeric {
                quantity: "linear predictor",
                location: "q_derivs".into(),
            });
        }
        Ok(self.q_derivs_unchecked(u, y))
    }

    /// Quasi-likelihood `Q(g^{-1}(u), y)` up to a term free of `u`.
    pub fn quasi_likelihood(self, u: f64, y: f64) -> f64 {
        match self {
            Family::Identity => -0.5 * (y - u) * (y - u),
            Family::Logit => {
                let u = self.clamp(u);
                // y u - log(1 + e^u)
                let log1pexp = if u > 0.0 {
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                };
                y * u - log1pexp
            }
        }
    }

    pub fn link_eval(self, which: LinkFn, x: f64) -> Result<f64> {
        match self {
            Family::Identity => Ok(match which {
                LinkFn::Link | LinkFn::Inverse => x,
                LinkFn::Deriv1 | LinkFn::Variance => 1.0,
                LinkFn::Deriv2 | LinkFn::VarianceDeriv => 0.0,
            }),
            Family::Logit => {
                if which == LinkFn::Inverse {
                    return Ok(self.inverse_link(x));
                }
                let needs_open = matches!(which, LinkFn::Link | LinkFn::Deriv1 | LinkFn::Deriv2);
                if needs_open && !(x > 0.0 && x < 1.0) {
                    return Err(Error::Domain(format!(
                        "logit link evaluated at mu = {x}, outside (0, 1)"
                    )));
                }
                let v = x * (1.0 - x);
                Ok(match which {
                    LinkFn::Link => (x / (1.0 - x)).ln(),
                    LinkFn::Deriv1 => 1.0 / v,
                    LinkFn::Deriv2 => (2.0 * x - 1.0) / (v * v),
                    LinkFn::Variance => v,
                    LinkFn::VarianceDeriv => 1.0 - 2.0 * x,
                    LinkFn::Inverse => unreachable!(),
                })
            }
        }
    }

    /// `V(mu) g'(mu)^2`, the inverse of the curvature weight `-Q_2` at `y = mu`.
    pub fn variance_link_weight(self, mu: f64) -> f64 {
        match self {
            Family::Identity => 1.0,
            Family::Logit => 1.0 / (mu * (1.0 - mu)),
        }
    }
}
