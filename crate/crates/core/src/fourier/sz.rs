//! Transform pricer for the Ornstein-Uhlenbeck stochastic volatility model.
//!
//! The characteristic function of the log spot is
//! `exp(iu(x + r tau) - iu rho (s^2 + w^2 tau)/(2w) + D s^2/2 + B s + C)`
//! with `s` the spot volatility and `w` the vol-of-vol. `C` contains
//! `-ln(g)/2` for a complex `g` that winds around the origin as `u` grows,
//! so the logarithm is continued along the integration grid instead of taken
//! on the principal branch.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::branch::{BranchTracker, ScaledComplex};
use super::heston::FtGreeks;
use crate::error::{require, Error, Result};
use crate::models::SzParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SzQuoteInput {
    pub spot: f64,
    pub strike: f64,
    /// Spot volatility.
    pub vol: f64,
    pub tau: f64,
}

/// How `ln g` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogBranch {
    /// Continued along the grid with a rotation count.
    Tracked,
    /// Principal branch only; kept to demonstrate the discontinuity.
    Principal,
}

/// Integration controls for the fixed-grid quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SzGridSpec {
    pub tol: f64,
    pub upper: f64,
    pub max_doublings: u32,
    pub initial_panels: usize,
    pub max_panels: usize,
    /// Skip refinement and integrate once on this many panels.
    pub fixed_panels: Option<usize>,
    pub branch: LogBranch,
}

impl Default for SzGridSpec {
    fn default() -> Self {
        SzGridSpec {
            tol: 1e-8,
            upper: 200.0,
            max_doublings: 3,
            initial_panels: 32,
            max_panels: 1 << 14,
            fixed_panels: None,
            branch: LogBranch::Tracked,
        }
    }
}

/// Log characteristic function and its derivative in the spot volatility.
#[derive(Clone, Copy, Debug)]
pub struct SzLogCf {
    pub value: Complex64,
    pub dvol: Complex64,
}

/// Log characteristic function at `u`, with `ln g` supplied by `log_g`.
/// `g` is passed in scaled form since it grows like `exp(g1 tau)`.
pub fn sz_log_cf(
    p: &SzParams,
    u: Complex64,
    log_spot: f64,
    vol: f64,
    tau: f64,
    log_g: &mut dyn FnMut(&ScaledComplex) -> Complex64,
) -> SzLogCf {
    let i = Complex64::i();
    let (k, th, w, rho) = (p.kappa, p.theta, p.omega, p.rho);
    let w2 = w * w;
    let iu = i * u;
    let s1 = 0.5 * iu + 0.5 * u * u * (1.0 - rho * rho) - iu * rho * k / w;
    let s2 = iu * rho * k * th / w;
    let a = iu * rho / (2.0 * w);
    let g1 = (k * k + 2.0 * w2 * s1).sqrt();
    let g2 = (k - 2.0 * w2 * a) / g1;
    // g = cosh(g1 tau) + g2 sinh(g1 tau), h = sinh(g1 tau) + g2 cosh(g1 tau)
    let decay = (-2.0 * g1 * tau).exp();
    let gs = (1.0 + g2) + (1.0 - g2) * decay;
    let hs = (1.0 + g2) - (1.0 - g2) * decay;
    let hg = hs / gs;
    let inv_g = 2.0 * (-g1 * tau).exp() / gs;
    let g = ScaledComplex { log_scale: g1 * tau - std::f64::consts::LN_2, factor: gs };
    let d = (k - g1 * hg) / w2;
    let c2 = k * th / w2;
    let c1 = k * k * th / w2 - s2;
    let a1 = c1 / g1;
    let a0 = c2 - c1 * g2 / g1;
    let b = a1 * hg - c2 + a0 * inv_g;
    let one_m = 1.0 - g2 * g2;
    let sq_int =
        a1 * a1 * tau + (a0 * a0 - a1 * a1 * one_m) * (hg - g2) / (g1 * one_m) - 2.0 * a1 * a0 / g1 * (inv_g - 1.0);
    let c = 0.5 * k * tau - 0.5 * log_g(&g) - 0.5 * w2 * c2 * c2 * tau + 0.5 * w2 * sq_int;
    let value =
        iu * (log_spot + p.r * tau) - iu * rho * (vol * vol + w2 * tau) / (2.0 * w) + 0.5 * d * vol * vol + b * vol + c;
    let dvol = -iu * rho * vol / w + d * vol + b;
    SzLogCf { value, dvol }
}

fn check(p: &SzParams, q: &SzQuoteInput) -> Result<()> {
    require(p.omega > 0.0, "omega", p.omega, "must be positive for the transform pricer")?;
    require(q.spot > 0.0, "S", q.spot, "must be positive")?;
    require(q.strike > 0.0, "K", q.strike, "must be positive")?;
    require(q.tau > 0.0, "tau", q.tau, "must be positive")
}

const NOT_FINITE: Complex64 = Complex64::new(f64::NAN, f64::NAN);

const GL8_X: [f64; 4] = [0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363];
const GL8_W: [f64; 4] = [0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];

/// Sums of the integrands over `(0, upper]` on `panels` equal panels with
/// 8-point Gauss-Legendre nodes, visited in increasing order.
fn sweep<const M: usize>(upper: f64, panels: usize, f: &mut dyn FnMut(f64) -> [f64; M]) -> [f64; M] {
    let hw = 0.5 * upper / panels as f64;
    let mut nodes = Vec::with_capacity(8);
    for j in (0..4).rev() {
        nodes.push((-GL8_X[j], GL8_W[j]));
    }
    for j in 0..4 {
        nodes.push((GL8_X[j], GL8_W[j]));
    }
    let mut acc = [0.0; M];
    for p in 0..panels {
        let c = hw * (2 * p + 1) as f64;
        for (x, wt) in &nodes {
            let v = f(c + hw * x);
            for m in 0..M {
                acc[m] += wt * hw * v[m];
            }
        }
    }
    acc
}

/// Per-pass integrand factory: each pass restarts branch tracking at u = 0.
fn refine<'a, const M: usize>(
    spec: &SzGridSpec,
    upper: f64,
    make: &dyn Fn() -> Box<dyn FnMut(f64) -> [f64; M] + 'a>,
) -> Result<([f64; M], usize)> {
    if let Some(n) = spec.fixed_panels {
        let sums = sweep(upper, n, &mut *make());
        if sums.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("characteristic function is not finite on the grid".into()));
        }
        return Ok((sums, n));
    }
    let mut panels = spec.initial_panels;
    let mut prev = sweep(upper, panels, &mut *make());
    loop {
        panels *= 2;
        let next = sweep(upper, panels, &mut *make());
        let change = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("characteristic function is not finite on the grid".into()));
        }
        if change < spec.tol {
            return Ok((next, panels));
        }
        if panels >= spec.max_panels {
            return Err(Error::Numerical(format!("grid refinement did not converge: last change {change}")));
        }
        prev = next;
    }
}

/// Diagnostics of one pricing run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SzRun {
    pub greeks: FtGreeks,
    pub upper: f64,
    pub panels: usize,
    /// Largest step of the continued imaginary part of `ln g` between
    /// consecutive grid points, over both probability integrands.
    pub max_log_step: f64,
    pub rotations: i64,
}

/// Call price, delta, gamma and sensitivity to the spot volatility.
pub fn sz_run(p: &SzParams, q: &SzQuoteInput, spec: &SzGridSpec) -> Result<SzRun> {
    check(p, q)?;
    let i = Complex64::i();
    let lnk = q.strike.ln();
    let x0 = q.spot.ln();
    // phi(-i) = E[S_T] = S e^{r tau}
    let log_norm = x0 + p.r * q.tau;
    let principal = |z: &ScaledComplex| z.principal_log();

    let magnitude = |u: f64| {
        let l1 = sz_log_cf(p, Complex64::new(u, -1.0), x0, q.vol, q.tau, &mut principal.clone());
        let l2 = sz_log_cf(p, Complex64::new(u, 0.0), x0, q.vol, q.tau, &mut principal.clone());
        ((l1.value.re - log_norm).exp() + l2.value.re.exp()) / u
    };
    let mut upper = spec.upper;
    let mut doublings = 0;
    while !(magnitude(upper) * upper < spec.tol / 10.0) {
        if doublings == spec.max_doublings {
            return Err(Error::Numerical(format!("integrand tail is not negligible at {upper}")));
        }
        upper *= 2.0;
        doublings += 1;
    }

    let stats = std::cell::RefCell::new((0.0f64, 0i64));
    let make = || -> Box<dyn FnMut(f64) -> [f64; 5] + '_> {
        let mut t1 = BranchTracker::new();
        let mut t2 = BranchTracker::new();
        let branch = spec.branch;
        let stats = &stats;
        Box::new(move |u: f64| {
            let mut lg1 = |z: &ScaledComplex| match branch {
                LogBranch::Tracked => z.tracked_log(&mut t1).unwrap_or(NOT_FINITE),
                LogBranch::Principal => z.principal_log(),
            };
            let l1 = sz_log_cf(p, Complex64::new(u, -1.0), x0, q.vol, q.tau, &mut lg1);
            let mut lg2 = |z: &ScaledComplex| match branch {
                LogBranch::Tracked => z.tracked_log(&mut t2).unwrap_or(NOT_FINITE),
                LogBranch::Principal => z.principal_log(),
            };
            let l2 = sz_log_cf(p, Complex64::new(u, 0.0), x0, q.vol, q.tau, &mut lg2);
            {
                let mut s = stats.borrow_mut();
                s.0 = s.0.max(t1.max_step()).max(t2.max_step());
                s.1 = t1.rotations().abs().max(t2.rotations().abs()).max(s.1);
            }
            let phase = (-i * u * lnk).exp();
            let w1 = phase * (l1.value - log_norm).exp();
            let w2 = phase * l2.value.exp();
            let iu = i * u;
            [(w1 / iu).re, (w2 / iu).re, w1.re, (w1 * l1.dvol / iu).re, (w2 * l2.dvol / iu).re]
        })
    };
    let (sums, panels) = refine(spec, upper, &make)?;
    let [i1, i2, ig, id1, id2] = sums.map(|x| x / PI);
    let p1 = 0.5 + i1;
    let p2 = 0.5 + i2;
    let disc_k = (-p.r * q.tau).exp() * q.strike;
    let greeks =
        FtGreeks { price: q.spot * p1 - disc_k * p2, delta: p1, gamma: ig / q.spot, vega: q.spot * id1 - disc_k * id2 };
    let (max_log_step, rotations) = *stats.borrow();
    Ok(SzRun { greeks, upper, panels, max_log_step, rotations })
}

pub fn sz_call_ft(p: &SzParams, q: &SzQuoteInput, spec: &SzGridSpec) -> Result<f64> {
    Ok(sz_run(p, q, spec)?.greeks.price)
}

pub fn sz_put_ft(p: &SzParams, q: &SzQuoteInput, spec: &SzGridSpec) -> Result<f64> {
    let c = sz_call_ft(p, q, spec)?;
    Ok(c - q.spot + (-p.r * q.tau).exp() * q.strike)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig8() -> SzParams {
        SzParams { kappa: 4.0, theta: 0.2, omega: 0.1, rho: -0.5, r: 0.0953 }
    }

    /// Riccati system for (D, B, C) integrated with classical Runge-Kutta.
    fn riccati(p: &SzParams, u: Complex64, tau: f64, steps: usize) -> (Complex64, Complex64, Complex64) {
        let i = Complex64::i();
        let (k, th, w, rho) = (p.kappa, p.theta, p.omega, p.rho);
        let w2 = w * w;
        let iu = i * u;
        let s1 = 0.5 * iu + 0.5 * u * u * (1.0 - rho * rho) - iu * rho * k / w;
        let s2 = iu * rho * k * th / w;
        let rhs = |y: [Complex64; 3]| {
            let [d, b, _] = y;
            [
                w2 * d * d - 2.0 * k * d - 2.0 * s1,
                k * th * d - k * b + w2 * d * b - s2,
                k * th * b + 0.5 * w2 * (d + b * b),
            ]
        };
        let mut y = [iu * rho / w, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        let h = tau / steps as f64;
        let add = |a: [Complex64; 3], b: [Complex64; 3], s: f64| [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s];
        for _ in 0..steps {
            let k1 = rhs(y);
            let k2 = rhs(add(y, k1, h / 2.0));
            let k3 = rhs(add(y, k2, h / 2.0));
            let k4 = rhs(add(y, k3, h));
            for j in 0..3 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        (y[0], y[1], y[2])
    }

    #[test]
    fn closed_form_solves_the_riccati_system() {
        let p = fig8();
        for u in [Complex64::new(0.7, 0.0), Complex64::new(3.0, -1.0), Complex64::new(12.0, 0.0)] {
            let tau = 0.6;
            let (d, b, c) = riccati(&p, u, tau, 4000);
            let vol = 0.3;
            let mut lg = |z: &ScaledComplex| z.principal_log();
            let got = sz_log_cf(&p, u, 0.0, vol, tau, &mut lg).value;
            let i = Complex64::i();
            let want = i * u * p.r * tau - i * u * p.rho * (vol * vol + p.omega * p.omega * tau) / (2.0 * p.omega)
                + 0.5 * d * vol * vol
                + b * vol
                + c;
            // Short horizon and small u keep ln g on the principal branch here.
            assert!((got - want).norm() < 1e-8, "u={u}: {got} vs {want}");
        }
    }

    #[test]
    fn normalisation() {
        let p = fig8();
        let mut lg = |z: &ScaledComplex| z.principal_log();
        let l = sz_log_cf(&p, Complex64::new(1e-9, 0.0), 4.6, 0.2, 1.0, &mut lg);
        assert!(l.value.norm() < 1e-7);
    }

    #[test]
    fn delta_sits_between_zero_and_one_and_parity_holds() {
        let p = fig8();
        let q = SzQuoteInput { spot: 100.0, strike: 100.0, vol: 0.2, tau: 0.25 };
        let run = sz_run(&p, &q, &SzGridSpec::default()).unwrap();
        assert!(run.greeks.delta > 0.0 && run.greeks.delta < 1.0);
        let put = sz_put_ft(&p, &q, &SzGridSpec::default()).unwrap();
        assert!((run.greeks.price - put - 100.0 + 100.0 * (-0.0953f64 * 0.25).exp()).abs() < 1e-12);
    }
}
