use std::f64::consts::PI;

use num_complex::Complex64;

use super::quad::{integrate_semi_infinite, QuadratureSpec};
use crate::error::{require, Result};
use crate::models::HestonParams;

/// Inputs of a Heston quote.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HestonQuoteInput {
    pub spot: f64,
    pub strike: f64,
    pub variance: f64,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FtGreeks {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Sensitivity to the spot variance.
    pub vega: f64,
}

/// `C` and `D` of the log characteristic function `C + D v + iu ln S`,
/// in the rotation-free form.
fn coefficients(p: &HestonParams, u: Complex64, tau: f64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    let w2 = p.omega * p.omega;
    let b = p.kappa - p.rho * p.omega * i * u;
    let d = (b * b + w2 * (i * u + u * u)).sqrt();
    let g = (b - d) / (b + d);
    let e = (-d * tau).exp();
    let c = i * u * p.r * tau + p.kappa * p.theta / w2 * ((b - d) * tau - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
    let dd = (b - d) / w2 * (1.0 - e) / (1.0 - g * e);
    (c, dd)
}

/// Characteristic function of the log spot at maturity.
pub fn heston_cf(p: &HestonParams, u: Complex64, spot: f64, variance: f64, tau: f64) -> Complex64 {
    let (c, d) = coefficients(p, u, tau);
    (c + d * variance + Complex64::i() * u * spot.ln()).exp()
}

fn check(p: &HestonParams, q: &HestonQuoteInput) -> Result<()> {
    require(p.omega > 0.0, "omega", p.omega, "must be positive for the transform pricer")?;
    require(q.spot > 0.0, "S", q.spot, "must be positive")?;
    require(q.strike > 0.0, "K", q.strike, "must be positive")?;
    require(q.variance >= 0.0, "v", q.variance, "must be non-negative")?;
    require(q.tau > 0.0, "tau", q.tau, "must be positive")
}

struct Parts {
    p1: f64,
    p2: f64,
    gamma_integral: f64,
    dp1_dv: f64,
    dp2_dv: f64,
}

fn parts(p: &HestonParams, q: &HestonQuoteInput, spec: &QuadratureSpec, with_greeks: bool) -> Result<Parts> {
    check(p, q)?;
    let i = Complex64::i();
    let lnk = q.strike.ln();
    let lns = q.spot.ln();
    let shift = -i;
    let (c_norm, d_norm) = coefficients(p, shift, q.tau);
    let log_norm = c_norm + d_norm * q.variance + i * shift * lns;
    // Integrands of the two probabilities, returned as (value, d/dv).
    let first = |u: f64| -> (Complex64, Complex64) {
        let z = Complex64::new(u, 0.0) + shift;
        let (c, d) = coefficients(p, z, q.tau);
        let ratio = (c + d * q.variance + i * z * lns - log_norm).exp();
        let w = (-i * u * lnk).exp() * ratio;
        (w, w * (d - d_norm))
    };
    let second = |u: f64| -> (Complex64, Complex64) {
        let z = Complex64::new(u, 0.0);
        let (c, d) = coefficients(p, z, q.tau);
        let w = (-i * u * lnk).exp() * (c + d * q.variance + i * z * lns).exp();
        (w, w * d)
    };
    let iu = |u: f64| i * u;
    let int = |f: &dyn Fn(f64) -> f64| integrate_semi_infinite(f, spec).map(|r| r.value / PI);
    let p1 = 0.5 + int(&|u| (first(u).0 / iu(u)).re)?;
    let p2 = 0.5 + int(&|u| (second(u).0 / iu(u)).re)?;
    if !with_greeks {
        return Ok(Parts { p1, p2, gamma_integral: 0.0, dp1_dv: 0.0, dp2_dv: 0.0 });
    }
    let gamma_integral = int(&|u| first(u).0.re)?;
    let dp1_dv = int(&|u| (first(u).1 / iu(u)).re)?;
    let dp2_dv = int(&|u| (second(u).1 / iu(u)).re)?;
    Ok(Parts { p1, p2, gamma_integral, dp1_dv, dp2_dv })
}

pub fn heston_call_ft(p: &HestonParams, q: &HestonQuoteInput, spec: &QuadratureSpec) -> Result<f64> {
    let pp = parts(p, q, spec, false)?;
    Ok(q.spot * pp.p1 - (-p.r * q.tau).exp() * q.strike * pp.p2)
}

pub fn heston_put_ft(p: &HestonParams, q: &HestonQuoteInput, spec: &QuadratureSpec) -> Result<f64> {
    let pp = parts(p, q, spec, false)?;
    Ok((-p.r * q.tau).exp() * q.strike * (1.0 - pp.p2) - q.spot * (1.0 - pp.p1))
}

/// Call price with delta, gamma and variance sensitivity.
pub fn heston_greeks_ft(p: &HestonParams, q: &HestonQuoteInput, spec: &QuadratureSpec) -> Result<FtGreeks> {
    let pp = parts(p, q, spec, true)?;
    let disc_k = (-p.r * q.tau).exp() * q.strike;
    Ok(FtGreeks {
        price: q.spot * pp.p1 - disc_k * pp.p2,
        delta: pp.p1,
        gamma: pp.gamma_integral / q.spot,
        vega: q.spot * pp.dp1_dv - disc_k * pp.dp2_dv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::bs_call;

    fn table2() -> HestonParams {
        HestonParams { kappa: 0.1465, theta: 0.5172, omega: 0.5786, rho: -0.0243, r: 0.0 }
    }

    #[test]
    fn cf_is_normalised() {
        let p = table2();
        let phi0 = heston_cf(&p, Complex64::new(0.0, 0.0), 1000.0, 0.5, 0.3);
        assert!((phi0 - 1.0).norm() < 1e-14);
        // E[S_T] = S e^{rT}
        let p = HestonParams { r: 0.05, ..p };
        let m = heston_cf(&p, -Complex64::i(), 1000.0, 0.5, 0.3);
        assert!((m.re / (1000.0 * (0.05f64 * 0.3).exp()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_value_at_the_money() {
        let q = HestonQuoteInput { spot: 1000.0, strike: 1000.0, variance: 0.5172, tau: 1.0 / 12.0 };
        let c = heston_call_ft(&table2(), &q, &QuadratureSpec::default()).unwrap();
        assert!((c - 82.4766).abs() < 1e-3, "{c}");
    }

    #[test]
    fn tiny_vol_of_vol_approaches_black_scholes() {
        let p = HestonParams { kappa: 1.0, theta: 0.04, omega: 1e-4, rho: 0.0, r: 0.03 };
        let q = HestonQuoteInput { spot: 100.0, strike: 95.0, variance: 0.04, tau: 0.5 };
        let c = heston_call_ft(&p, &q, &QuadratureSpec::default()).unwrap();
        let bs = bs_call(100.0, 95.0, 0.03, 0.2, 0.5).unwrap().price;
        assert!((c - bs).abs() < 1e-4, "{c} vs {bs}");
    }

    #[test]
    fn put_call_parity() {
        let p = HestonParams { r: 0.04, ..table2() };
        let q = HestonQuoteInput { spot: 980.0, strike: 1000.0, variance: 0.3, tau: 0.25 };
        let spec = QuadratureSpec::default();
        let c = heston_call_ft(&p, &q, &spec).unwrap();
        let put = heston_put_ft(&p, &q, &spec).unwrap();
        assert!((c - put - (980.0 - 1000.0 * (-0.04f64 * 0.25).exp())).abs() < 1e-9);
    }

    #[test]
    fn greeks_match_bumps() {
        let p = table2();
        let spec = QuadratureSpec::default();
        let q = HestonQuoteInput { spot: 1000.0, strike: 1000.0, variance: 0.5172, tau: 1.0 / 12.0 };
        let g = heston_greeks_ft(&p, &q, &spec).unwrap();
        let price =
            |s: f64, v: f64| heston_call_ft(&p, &HestonQuoteInput { spot: s, variance: v, ..q }, &spec).unwrap();
        let h = 0.5;
        let delta = (price(1000.0 + h, 0.5172) - price(1000.0 - h, 0.5172)) / (2.0 * h);
        let gamma = (price(1000.0 + h, 0.5172) - 2.0 * g.price + price(1000.0 - h, 0.5172)) / (h * h);
        let hv = 1e-4;
        let vega = (price(1000.0, 0.5172 + hv) - price(1000.0, 0.5172 - hv)) / (2.0 * hv);
        assert!((g.delta - delta).abs() < 1e-6);
        assert!((g.gamma - gamma).abs() < 1e-6);
        assert!((g.vega - vega).abs() < 1e-4);
    }
}
