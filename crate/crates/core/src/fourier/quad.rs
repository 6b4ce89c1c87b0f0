//! Adaptive Gauss-Kronrod (7/15) quadrature on finite and half-infinite ranges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Tolerances and truncation policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Initial truncation point of half-infinite integrals.
    pub upper: f64,
    /// How many times the truncation point may double when the tail test fails.
    pub max_doublings: u32,
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            upper: 200.0,
            max_doublings: 3,
            initial_panels: 16,
            max_panels: 5000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    /// Upper limit actually used.
    pub upper: f64,
    pub evaluations: usize,
}

/// One 15-point Kronrod panel: (estimate, error estimate).
pub fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates over `[a, b]`, bisecting the panel with the largest error
/// estimate until the total error meets the tolerance.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Integral> {
    let n0 = spec.initial_panels.max(1);
    let mut heap = BinaryHeap::new();
    let step = (b - a) / n0 as f64;
    for i in 0..n0 {
        let (lo, hi) = (a + step * i as f64, if i + 1 == n0 { b } else { a + step * (i + 1) as f64 });
        let (value, error) = gk15(f, lo, hi);
        heap.push(Panel { a: lo, b: hi, value, error });
    }
    let mut evaluations = 15 * n0;
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if !value.is_finite() {
            return Err(Error::Numerical(format!("integrand is not finite on [{a}, {b}]")));
        }
        if error <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
            return Ok(Integral { value, error, upper: b, evaluations });
        }
        if heap.len() >= spec.max_panels {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{a}, {b}]: estimate {value}, error {error}"
            )));
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(f, lo, hi);
            heap.push(Panel { a: lo, b: hi, value, error });
        }
        evaluations += 30;
    }
}

/// Integrates over `[0, inf)` by truncation. The truncation point starts at
/// `spec.upper` and doubles while `|f|` near it, times its length, is above a
/// tenth of the absolute tolerance.
pub fn integrate_semi_infinite(f: &dyn Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<Integral> {
    let mut upper = spec.upper;
    let tail = |u: f64| (0..4).map(|j| f(u * (1.0 - 0.02 * j as f64)).abs()).fold(0.0, f64::max) * u;
    let mut doublings = 0;
    while !(tail(upper) < spec.abs_tol / 10.0) {
        if doublings == spec.max_doublings {
            return Err(Error::Numerical(format!("integrand tail is not negligible at {upper}")));
        }
        upper *= 2.0;
        doublings += 1;
    }
    integrate(f, 0.0, upper, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let (v, e) = gk15(&|x: f64| x.powi(5) - 2.0 * x, 0.0, 2.0);
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
        assert!(e < 1e-12);
    }

    #[test]
    fn oscillatory_decaying() {
        // int_0^inf e^{-x} cos(3x) dx = 1/10
        let r = integrate_semi_infinite(&|x: f64| (-x).exp() * (3.0 * x).cos(), &QuadratureSpec::default()).unwrap();
        assert!((r.value - 0.1).abs() < 1e-10);
        assert_eq!(r.upper, 200.0);
    }

    #[test]
    fn slow_tail_doubles_upper_limit() {
        // int_0^inf e^{-x/50} dx = 50
        let spec = QuadratureSpec { abs_tol: 1e-8, ..Default::default() };
        let r = integrate_semi_infinite(&|x: f64| (-x / 50.0).exp(), &spec).unwrap();
        assert!(r.upper > 200.0);
        assert!((r.value - 50.0).abs() < 1e-6);
    }

    #[test]
    fn heavy_tail_fails() {
        let r = integrate_semi_infinite(&|x: f64| 1.0 / (1.0 + x), &QuadratureSpec::default());
        assert!(r.is_err());
    }
}
