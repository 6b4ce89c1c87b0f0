//! Model and result diagnostics.

use roots::{find_root_brent, Convergency};

use crate::closedform::bs_call;
use crate::error::{require, Error, Result};
use crate::fourier::quad::{integrate, QuadratureSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FellerCheck {
    pub satisfied: bool,
    /// `2 kappa theta / omega^2`; infinite when omega is zero.
    pub statistic: f64,
}

/// Square-root variance stays strictly positive iff `2 kappa theta >= omega^2`.
pub fn feller_check(kappa: f64, theta: f64, omega: f64) -> Result<FellerCheck> {
    require(kappa >= 0.0, "kappa", kappa, "must be non-negative")?;
    require(theta >= 0.0, "theta", theta, "must be non-negative")?;
    require(omega >= 0.0, "omega", omega, "must be non-negative")?;
    if omega == 0.0 {
        return Ok(FellerCheck { satisfied: true, statistic: f64::INFINITY });
    }
    let statistic = 2.0 * kappa * theta / (omega * omega);
    Ok(FellerCheck { satisfied: statistic >= 1.0, statistic })
}

/// Logarithm of the scale density of `dv = kappa(theta - v) dt + omega v^gamma dW`,
/// i.e. `-int 2 mu / sigma^2 dv` with zero integration constant.
pub fn log_scale_density(kappa: f64, theta: f64, omega: f64, gamma: f64, v: f64) -> Result<f64> {
    require(v > 0.0, "v", v, "must be positive")?;
    require(omega > 0.0, "omega", omega, "must be positive")?;
    require(gamma > 0.0, "gamma", gamma, "must be positive")?;
    let w2 = omega * omega;
    let out = if gamma == 0.5 {
        -2.0 * kappa * theta / w2 * v.ln() + 2.0 * kappa * v / w2
    } else if gamma == 1.0 {
        2.0 * kappa * theta / (w2 * v) + 2.0 * kappa / w2 * v.ln()
    } else {
        2.0 * kappa * theta / (w2 * (2.0 * gamma - 1.0)) * v.powf(1.0 - 2.0 * gamma)
            - kappa / (w2 * (gamma - 1.0)) * v.powf(2.0 - 2.0 * gamma)
    };
    Ok(out)
}

pub fn cev_scale_density(kappa: f64, theta: f64, omega: f64, gamma: f64, v: f64) -> Result<f64> {
    Ok(log_scale_density(kappa, theta, omega, gamma, v)?.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Zero,
    Infinity,
}

/// Convergence of the scale integral alone cannot show that a boundary is
/// reached, so the only positive finding is divergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Unattainable,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttainabilityReport {
    pub boundary: Boundary,
    pub verdict: Verdict,
    /// `(decade edge nearest the boundary, log10 of the scale integral over that decade)`.
    pub evidence: Vec<(f64, f64)>,
    pub note: String,
}

/// Decades examined on each side.
pub const ATTAINABILITY_DECADES: usize = 3;

/// `log10 int_a^b Theta(v) dv`, integrated in `ln v` with the maximum
/// factored out so that huge exponents stay representable.
fn log10_decade_integral(kappa: f64, theta: f64, omega: f64, gamma: f64, a: f64, b: f64) -> Result<f64> {
    let g = |u: f64| log_scale_density(kappa, theta, omega, gamma, u.exp()).map(|l| l + u);
    let (ua, ub) = (a.ln(), b.ln());
    let (mut peak, mut at) = (f64::NEG_INFINITY, ua);
    for j in 0..=200 {
        let u = ua + (ub - ua) * j as f64 / 200.0;
        let x = g(u)?;
        if x > peak {
            (peak, at) = (x, u);
        }
    }
    if !peak.is_finite() {
        return Err(Error::Numerical(format!("scale density exponent is not finite on [{a}, {b}]")));
    }
    // The integrand can be a spike far narrower than the decade; panel edges
    // are packed geometrically around the largest sample.
    let mut edges = vec![ua, ub];
    for k in 1..=15 {
        let d = (ub - ua) * 10f64.powi(-k);
        edges.extend([at - d, at + d].into_iter().filter(|e| *e > ua && *e < ub));
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let f = |u: f64| g(u).map(|x| (x - peak).exp()).unwrap_or(f64::NAN);
    let spec = QuadratureSpec { abs_tol: 1e-16, rel_tol: 1e-10, ..QuadratureSpec::default() };
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += integrate(&f, w[0], w[1], &spec)?.value;
    }
    Ok((peak + total.ln()) / std::f64::consts::LN_10)
}

/// Divergence test for the scale integral near each boundary of the CEV
/// variance. A boundary is reported unattainable when the integral over each
/// of the last [`ATTAINABILITY_DECADES`] decades towards it is at least as
/// large as over the decade before. A convergent tail `v^-p` with `p > 1`
/// shrinks these increments by `10^(1-p)` per decade and fails the test.
pub fn boundary_attainability(kappa: f64, theta: f64, omega: f64, gamma: f64) -> Result<[AttainabilityReport; 2]> {
    require(kappa >= 0.0, "kappa", kappa, "must be non-negative")?;
    require(theta >= 0.0, "theta", theta, "must be non-negative")?;
    require(omega > 0.0, "omega", omega, "must be positive")?;
    let inconclusive = |boundary, note: &str| AttainabilityReport {
        boundary,
        verdict: Verdict::Inconclusive,
        evidence: vec![],
        note: note.to_string(),
    };
    if !(gamma > 1.0) {
        let note = "divergence argument covers gamma > 1 only";
        return Ok([inconclusive(Boundary::Zero, note), inconclusive(Boundary::Infinity, note)]);
    }
    let judge = |boundary, edges: Vec<(f64, f64)>| -> Result<AttainabilityReport> {
        let mut evidence = Vec::with_capacity(edges.len());
        for (near, far) in edges {
            let (a, b) = if near < far { (near, far) } else { (far, near) };
            evidence.push((near, log10_decade_integral(kappa, theta, omega, gamma, a, b)?));
        }
        let growing = evidence.windows(2).all(|w| w[1].1 >= w[0].1);
        let (verdict, note) = if growing {
            (Verdict::Unattainable, "scale integral does not shrink towards the boundary")
        } else {
            (Verdict::Inconclusive, "scale integral shrinks towards the boundary")
        };
        Ok(AttainabilityReport { boundary, verdict, evidence, note: note.to_string() })
    };
    let upper = judge(
        Boundary::Infinity,
        (3..3 + ATTAINABILITY_DECADES as i32 + 1).map(|j| (10f64.powi(j + 1), 10f64.powi(j))).collect(),
    )?;
    let lower = if kappa * theta > 0.0 {
        judge(
            Boundary::Zero,
            (1..1 + ATTAINABILITY_DECADES as i32 + 1).map(|j| (10f64.powi(-j - 1), 10f64.powi(-j))).collect(),
        )?
    } else {
        inconclusive(Boundary::Zero, "the exponent that drives divergence at zero vanishes when kappa theta = 0")
    };
    Ok([lower, upper])
}

/// `(approx - reference) / reference * 100`.
pub fn percent_diff(approx: f64, reference: f64) -> Result<f64> {
    require(reference != 0.0, "reference", reference, "must be non-zero")?;
    Ok((approx - reference) / reference * 100.0)
}

/// `call + K e^{-r tau} - put - S`.
pub fn parity_check(call: f64, put: f64, s: f64, k: f64, r: f64, tau: f64) -> f64 {
    call + k * (-r * tau).exp() - put - s
}

pub const IMPLIED_VOL_BRACKET: (f64, f64) = (1e-6, 5.0);
pub const IMPLIED_VOL_TOL: f64 = 1e-10;

struct StepTolerance {
    tol: f64,
    max_iter: usize,
}

impl Convergency<f64> for StepTolerance {
    fn is_root_found(&mut self, y: f64) -> bool {
        y == 0.0
    }
    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() < self.tol
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= self.max_iter
    }
}

/// Black-Scholes volatility reproducing a call price, by Brent's method.
pub fn bs_implied_vol(price: f64, s: f64, k: f64, r: f64, tau: f64) -> Result<f64> {
    require(s > 0.0, "S", s, "must be positive")?;
    require(k > 0.0, "K", k, "must be positive")?;
    require(tau > 0.0, "tau", tau, "must be positive")?;
    let lower = (s - k * (-r * tau).exp()).max(0.0);
    if !(price > lower && price < s) {
        return Err(crate::error::domain("price", price, "outside the no-arbitrage bounds of a call"));
    }
    let (lo, hi) = IMPLIED_VOL_BRACKET;
    let f = |vol: f64| bs_call(s, k, r, vol, tau).map(|q| q.price - price).unwrap_or(f64::NAN);
    if f(lo) > 0.0 {
        return Ok(lo);
    }
    let mut conv = StepTolerance { tol: IMPLIED_VOL_TOL, max_iter: 200 };
    find_root_brent(lo, hi, f, &mut conv)
        .map_err(|e| Error::Numerical(format!("implied volatility not found in [{lo}, {hi}]: {e:?}")))
}
