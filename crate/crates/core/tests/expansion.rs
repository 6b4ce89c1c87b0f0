use std::sync::OnceLock;

use kmexpand::closedform::bs_call;
use kmexpand::diagnostics::parity_check;
use kmexpand::kmcore::{self, KmExpansion};
use kmexpand::models::{CevParams, HestonParams, SzParams, NUISANCE, SPOT, VARIANCE, VOL};
use kmexpand::symx::Binding;
use proptest::prelude::*;

const HESTON: HestonParams = HestonParams { kappa: 2.0, theta: 0.04, omega: 0.1, rho: -0.5, r: 0.1 };
const CEV: CevParams = CevParams { kappa: 0.1465, theta: 0.5172, omega: 0.5786, rho: -0.0243, r: 0.0, gamma: 0.6 };
const SZ: SzParams = SzParams { kappa: 4.0, theta: 0.2, omega: 0.1, rho: -0.5, r: 0.0953 };

fn heston() -> &'static KmExpansion {
    static X: OnceLock<KmExpansion> = OnceLock::new();
    X.get_or_init(|| kmcore::heston_call(&HESTON, 100.0, 3).unwrap())
}

fn cev() -> &'static KmExpansion {
    static X: OnceLock<KmExpansion> = OnceLock::new();
    X.get_or_init(|| kmcore::cev_call(&CEV, 100.0, 2).unwrap())
}

fn sz() -> &'static KmExpansion {
    static X: OnceLock<KmExpansion> = OnceLock::new();
    X.get_or_init(|| kmcore::sz_call(&SZ, 100.0, 2).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn order_zero_is_the_baseline(s in 70.0f64..130.0, level in 0.01f64..1.0, tau in 0.05f64..2.0) {
        let b = Binding::new().with(SPOT, s).with(VARIANCE, level).with(NUISANCE, level.sqrt());
        for x in [heston(), cev()] {
            let q = x.price(&b, tau).unwrap();
            prop_assert!(rel(q.order(0), q.baseline()) <= 1e-12, "{} vs {}", q.order(0), q.baseline());
        }
        let b = Binding::new().with(SPOT, s).with(VOL, level).with(NUISANCE, level);
        let q = sz().price(&b, tau).unwrap();
        prop_assert!(rel(q.order(0), q.baseline()) <= 1e-12, "{} vs {}", q.order(0), q.baseline());
    }

    // Near the calibration point the correction terms are O(1), so the
    // absolute gap is pure summation round-off.
    #[test]
    fn put_series_satisfies_parity(s in 70.0f64..130.0, v in 0.01f64..0.16, eta in 0.1f64..0.4, tau in 0.05f64..1.0) {
        let call = heston();
        let put = call.put_from_call_series().unwrap();
        let b = Binding::new().with(SPOT, s).with(VARIANCE, v).with(NUISANCE, eta);
        let (c, p) = (call.price(&b, tau).unwrap(), put.price(&b, tau).unwrap());
        for n in 0..=call.order() {
            let gap = parity_check(c.order(n), p.order(n), s, 100.0, HESTON.r, tau);
            prop_assert!(gap.abs() <= 1e-10, "order {n}: {gap}");
        }
    }
}

#[test]
fn deterministic_variance_series_converges_to_exact_price() {
    // With no vol-of-vol the variance follows its mean path, and the exact
    // price is Black-Scholes with the integrated variance.
    let p = HestonParams { omega: 0.0, ..HESTON };
    let x = kmcore::heston_call(&p, 100.0, 6).unwrap();
    for &(s, v, tau) in &[(90.0, 0.09, 0.25), (100.0, 0.09, 0.25), (110.0, 0.01, 0.25), (100.0, 0.09, 0.5)] {
        let b = Binding::new().with(SPOT, s).with(VARIANCE, v).with(NUISANCE, f64::sqrt(v));
        let q = x.price(&b, tau).unwrap();
        let w = p.theta * tau + (v - p.theta) * (1.0 - (-p.kappa * tau).exp()) / p.kappa;
        let exact = bs_call(s, 100.0, p.r, (w / tau).sqrt(), tau).unwrap().price;
        let errs: Vec<f64> = (0..=6).map(|n| (q.order(n) - exact).abs()).collect();
        assert!(errs[6] < 0.05 * errs[0], "{s} {v} {tau}: {errs:?}");
        assert!(errs[6] < 1e-2, "{s} {v} {tau}: {errs:?}");
    }
}

#[test]
fn corrections_shrink_with_maturity() {
    // Each term carries tau^(n+1); halving the maturity twice must cut the
    // order-3 error by more than the baseline error.
    use kmexpand::fourier::{heston_call_ft, HestonQuoteInput, QuadratureSpec};
    let b = Binding::new().with(SPOT, 90.0).with(VARIANCE, 0.04).with(NUISANCE, 0.2);
    let err = |tau: f64, n: usize| {
        let q = heston().price(&b, tau).unwrap();
        let ft = heston_call_ft(
            &HESTON,
            &HestonQuoteInput { spot: 90.0, strike: 100.0, variance: 0.04, tau },
            &QuadratureSpec::default(),
        )
        .unwrap();
        (q.order(n) - ft).abs()
    };
    let (e0, e3) = (err(0.4, 0) / err(0.1, 0), err(0.4, 3) / err(0.1, 3));
    assert!(e3 > e0, "order 3 ratio {e3}, order 0 ratio {e0}");
}
