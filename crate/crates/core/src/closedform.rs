//! Closed-form baseline prices, numerically and as symbolic expressions.

use crate::error::{require, Result};
use crate::symx::{normal_cdf, normal_pdf, Expression};

/// Black-Scholes quote with the analytic spot sensitivities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsQuote {
    pub price: f64,
    pub d1: f64,
    pub d2: f64,
    pub delta: f64,
    pub gamma: f64,
}

fn bs_inputs(s: f64, k: f64, vol: f64, tau: f64) -> Result<()> {
    require(s > 0.0, "S", s, "must be positive")?;
    require(k > 0.0, "K", k, "must be positive")?;
    require(vol > 0.0, "volatility", vol, "must be positive")?;
    require(tau > 0.0, "tau", tau, "must be positive")
}

fn d1_d2(s: f64, k: f64, r: f64, vol: f64, tau: f64) -> (f64, f64) {
    let sd = vol * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * vol * vol) * tau) / sd;
    (d1, d1 - sd)
}

pub fn bs_call(s: f64, k: f64, r: f64, vol: f64, tau: f64) -> Result<BsQuote> {
    bs_inputs(s, k, vol, tau)?;
    let (d1, d2) = d1_d2(s, k, r, vol, tau);
    let price = s * normal_cdf(d1) - k * (-r * tau).exp() * normal_cdf(d2);
    Ok(BsQuote { price, d1, d2, delta: normal_cdf(d1), gamma: normal_pdf(d1) / (s * vol * tau.sqrt()) })
}

pub fn bs_put(s: f64, k: f64, r: f64, vol: f64, tau: f64) -> Result<BsQuote> {
    bs_inputs(s, k, vol, tau)?;
    let (d1, d2) = d1_d2(s, k, r, vol, tau);
    let price = k * (-r * tau).exp() * normal_cdf(-d2) - s * normal_cdf(-d1);
    Ok(BsQuote { price, d1, d2, delta: normal_cdf(d1) - 1.0, gamma: normal_pdf(d1) / (s * vol * tau.sqrt()) })
}

/// Black-Scholes vega, dC/dvol.
pub fn bs_vega(s: f64, k: f64, r: f64, vol: f64, tau: f64) -> Result<f64> {
    bs_inputs(s, k, vol, tau)?;
    let (d1, _) = d1_d2(s, k, r, vol, tau);
    Ok(s * normal_pdf(d1) * tau.sqrt())
}

/// Variable names used by the symbolic baseline prices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceVars {
    /// Spot, or log-spot for futures.
    pub state: String,
    /// Baseline volatility (the nuisance parameter).
    pub vol: String,
    pub time: String,
    pub maturity: String,
}

impl PriceVars {
    pub fn new(state: &str) -> Self {
        PriceVars { state: state.into(), vol: "eta0".into(), time: "t".into(), maturity: "T".into() }
    }
}

impl Default for PriceVars {
    fn default() -> Self {
        PriceVars::new("S")
    }
}

struct BsParts {
    s: Expression,
    d1: Expression,
    d2: Expression,
    discount: Expression,
}

fn bs_parts(k: f64, r: f64, vars: &PriceVars) -> BsParts {
    let s = Expression::var(&vars.state);
    let vol = Expression::var(&vars.vol);
    let tau = Expression::var(&vars.maturity) - Expression::var(&vars.time);
    let sd = &vol * tau.sqrt();
    let d1 = (s.ln() - k.ln() + (r + 0.5 * (&vol * &vol)) * &tau) / &sd;
    let d2 = &d1 - &sd;
    let discount = k * (-r * &tau).exp();
    BsParts { s, d1, d2, discount }
}

/// Black-Scholes call as an expression in spot, time, maturity and volatility.
pub fn bs_call_symbolic(k: f64, r: f64, vars: &PriceVars) -> Expression {
    let p = bs_parts(k, r, vars);
    &p.s * p.d1.normal_cdf() - &p.discount * p.d2.normal_cdf()
}

pub fn bs_put_symbolic(k: f64, r: f64, vars: &PriceVars) -> Expression {
    let p = bs_parts(k, r, vars);
    &p.discount * (-&p.d2).normal_cdf() - &p.s * (-&p.d1).normal_cdf()
}

/// Futures price under a mean-reverting log-price with constant volatility.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchwartzQuote {
    pub futures: f64,
    /// Mean of the terminal log-price.
    pub mean: f64,
    /// Variance of the terminal log-price.
    pub variance: f64,
}

pub fn schwartz_futures(x: f64, alpha: f64, kappa: f64, vol: f64, tau: f64) -> Result<SchwartzQuote> {
    require(kappa > 0.0, "kappa", kappa, "must be positive")?;
    require(vol >= 0.0, "volatility", vol, "must be non-negative")?;
    require(tau > 0.0, "tau", tau, "must be positive")?;
    let decay = (-kappa * tau).exp();
    let mean = decay * x + (1.0 - decay) * alpha;
    let variance = vol * vol / (2.0 * kappa) * (1.0 - (-2.0 * kappa * tau).exp());
    Ok(SchwartzQuote { futures: (mean + 0.5 * variance).exp(), mean, variance })
}

/// Schwartz futures price as an expression in log-spot, time, maturity and volatility.
pub fn schwartz_futures_symbolic(alpha: f64, kappa: f64, vars: &PriceVars) -> Expression {
    let x = Expression::var(&vars.state);
    let vol = Expression::var(&vars.vol);
    let tau = Expression::var(&vars.maturity) - Expression::var(&vars.time);
    let decay = (-kappa * &tau).exp();
    let mean = &decay * &x + alpha * (1.0 - &decay);
    let half_var = (&vol * &vol) / (4.0 * kappa) * (1.0 - (-2.0 * kappa * &tau).exp());
    (mean + half_var).exp()
}
