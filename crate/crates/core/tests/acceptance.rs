//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN` fail for documented reasons (see README); they
//! are still printed as FAIL but do not fail the test binary.

mod support;

use std::f64::consts::PI;
use std::process::ExitCode;

use kmexpand::diagnostics::parity_check;
use kmexpand::experiments::{self, Check, ExperimentOutput};
use kmexpand::fourier::{sz_log_cf, sz_run, BranchTracker, LogBranch, SzGridSpec, SzQuoteInput};
use kmexpand::kmcore;
use kmexpand::models::{CevParams, HestonParams, SzParams, NUISANCE, SPOT, VARIANCE, VOL};
use kmexpand::symx::Binding;
use num_complex::Complex64;
use proptest::test_runner::{Config, TestRunner};
use support::*;

/// Criteria whose failing parts are documented deviations.
const KNOWN: [u32; 3] = [4, 6, 10];

struct Verdict {
    passed: bool,
    /// Failures limited to documented sub-checks.
    known_only: bool,
    detail: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict { passed: true, known_only: true, detail: Vec::new() }
    }

    fn record(&mut self, ok: bool, known: bool, line: String) {
        if !ok {
            self.passed = false;
            self.known_only &= known;
        }
        self.detail.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn error(&mut self, what: &str, e: impl std::fmt::Display) {
        self.record(false, false, format!("{what}: {e}"));
    }
}

fn run_experiment(id: &str) -> Result<ExperimentOutput, String> {
    let spec = experiments::lookup(id).map_err(|e| e.to_string())?;
    experiments::run(&spec).map_err(|e| e.to_string())
}

/// Runs registry experiments; `soft` marks checks that are documented deviations.
fn experiments_verdict(ids: &[&str], soft: &dyn Fn(&str, &Check) -> bool) -> Verdict {
    let mut v = Verdict::new();
    for id in ids {
        match run_experiment(id) {
            Ok(out) => {
                if out.failed_rows() > 0 {
                    v.record(false, false, format!("{id}: {} grid points failed", out.failed_rows()));
                }
                for (check, outcome) in out.spec.checks.iter().zip(&out.checks) {
                    let line = format!("{id}: {} [{}]", outcome.description, outcome.detail);
                    v.record(outcome.passed, soft(id, check), line);
                }
            }
            Err(e) => v.error(id, e),
        }
    }
    v
}

fn hard(_: &str, _: &Check) -> bool {
    false
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn order_zero_is_baseline() -> Verdict {
    let mut v = Verdict::new();
    let heston = HestonParams { kappa: 2.0, theta: 0.04, omega: 0.1, rho: -0.5, r: 0.1 };
    let cev = CevParams { kappa: 0.1465, theta: 0.5172, omega: 0.5786, rho: -0.0243, r: 0.0, gamma: 0.6 };
    let sz = SzParams { kappa: 4.0, theta: 0.2, omega: 0.1, rho: -0.5, r: 0.0953 };
    let cases: [(&str, Result<_, _>, &str); 3] = [
        ("heston", kmcore::heston_call(&heston, 100.0, 3), VARIANCE),
        ("cev", kmcore::cev_call(&cev, 100.0, 2), VARIANCE),
        ("sz", kmcore::sz_call(&sz, 100.0, 2), VOL),
    ];
    for (name, x, level_var) in cases {
        let x = match x {
            Ok(x) => x,
            Err(e) => {
                v.error(name, e);
                continue;
            }
        };
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for s in (0..=12).map(|i| 70.0 + 5.0 * i as f64) {
            for level in [0.01, 0.04, 0.1, 0.25, 0.5, 1.0] {
                for tau in [0.1, 0.5, 1.0, 2.0] {
                    let eta = if level_var == VOL { level } else { f64::sqrt(level) };
                    let b = Binding::new().with(SPOT, s).with(level_var, level).with(NUISANCE, eta);
                    match x.price(&b, tau) {
                        Ok(q) => worst = worst.max(rel(q.order(0), q.baseline())),
                        Err(e) => v.error(name, e),
                    }
                    count += 1;
                }
            }
        }
        v.record(worst <= 1e-12, false, format!("{name}: worst relative gap {worst:e} over {count} bindings"));
    }
    v
}

fn put_parity() -> Verdict {
    let mut v = Verdict::new();
    let p = HestonParams { kappa: 2.0, theta: 0.04, omega: 0.1, rho: -0.5, r: 0.1 };
    let built = kmcore::heston_call(&p, 100.0, 5).and_then(|c| Ok((c.put_from_call_series()?, c)));
    let (put, call) = match built {
        Ok(x) => x,
        Err(e) => {
            v.error("expansion", e);
            return v;
        }
    };
    let mut worst: f64 = 0.0;
    for s in (0..=40).map(|i| 80.0 + i as f64) {
        for tau in [0.25, 0.5, 1.0] {
            let b = Binding::new().with(SPOT, s).with(VARIANCE, 0.04).with(NUISANCE, 0.2);
            match (call.price(&b, tau), put.price(&b, tau)) {
                (Ok(c), Ok(q)) => {
                    for n in 0..=call.order() {
                        worst = worst.max(parity_check(c.order(n), q.order(n), s, 100.0, p.r, tau).abs());
                    }
                }
                (Err(e), _) | (_, Err(e)) => v.error("price", e),
            }
        }
    }
    v.record(worst <= 1e-10, false, format!("worst parity residual {worst:e} over orders 0..=5"));
    v
}

fn branch_cut() -> Verdict {
    let mut v = Verdict::new();
    let p = SzParams { kappa: 4.0, theta: 0.2, omega: 0.1, rho: -0.5, r: 0.0953 };
    for (label, shift) in [("u", 0.0), ("u - i", -1.0)] {
        let mut tracker = BranchTracker::new();
        let mut prev: Option<f64> = None;
        let mut worst: f64 = 0.0;
        let mut failed = None;
        for j in 1..=20_000 {
            let phi = j as f64 * 0.01;
            let mut log_g = |g: &kmexpand::fourier::ScaledComplex| match g.tracked_log(&mut tracker) {
                Ok(l) => l,
                Err(e) => {
                    failed = Some(e.to_string());
                    Complex64::new(f64::NAN, f64::NAN)
                }
            };
            let im = sz_log_cf(&p, Complex64::new(phi, shift), 100f64.ln(), 0.2, 0.25, &mut log_g).value.im;
            if let Some(last) = prev {
                worst = worst.max((im - last).abs());
            }
            prev = Some(im);
        }
        if let Some(e) = failed {
            v.error(label, e);
        }
        let ok = worst < PI && tracker.max_step() < PI;
        v.record(
            ok,
            false,
            format!("sweep at {label}: max step of log cf {worst:.4}, of ln g {:.4}", tracker.max_step()),
        );
    }
    // Stress set: long maturity and large vol of vol.
    let stress = SzParams { kappa: 4.0, theta: 0.2, omega: 0.3, rho: -0.5, r: 0.0953 };
    let q = SzQuoteInput { spot: 100.0, strike: 100.0, vol: 0.2, tau: 5.0 };
    let tracked = sz_run(&stress, &q, &SzGridSpec::default());
    match tracked {
        Ok(t) => {
            let spec =
                SzGridSpec { fixed_panels: Some(t.panels), branch: LogBranch::Principal, ..SzGridSpec::default() };
            match sz_run(&stress, &q, &spec) {
                Ok(pr) => {
                    let (a, b) = (t.greeks.price, pr.greeks.price);
                    v.record(
                        (a - b).abs() > 1e-3 && t.rotations != 0,
                        false,
                        format!("stress set: tracked {a:.4} ({} rotations), principal {b:.4}", t.rotations),
                    );
                }
                Err(e) => v.error("principal", e),
            }
        }
        Err(e) => v.error("tracked", e),
    }
    v
}

fn property_suites() -> Verdict {
    let mut v = Verdict::new();
    let mut suite = |name: &str, cases: u32, f: &dyn Fn(&mut TestRunner) -> Result<(), String>| {
        let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
        let r = f(&mut runner);
        let ok = r.is_ok();
        v.record(ok, false, format!("{name}: {cases} cases{}", r.err().map(|e| format!(", {e}")).unwrap_or_default()));
    };
    suite("derivative vs finite difference", 1000, &|r| {
        r.run(&(tree(false), point()), |(t, (x, y))| check_derivative(&t, x, y)).map_err(|e| e.to_string())
    });
    suite("simplify preserves value", 1000, &|r| {
        r.run(&(tree(true), point()), |(t, (x, y))| check_simplify(&t, x, y)).map_err(|e| e.to_string())
    });
    suite("Monte Carlo determinism", 48, &|r| {
        r.run(&proptest::num::u64::ANY, check_mc_determinism).map_err(|e| e.to_string())
    });
    suite("scale density vs quadrature", 1000, &|r| {
        r.run(&scale_params(), |(k, th, w, g, x)| check_scale_density(k, th, w, g, x)).map_err(|e| e.to_string())
    });
    v
}

fn main() -> ExitCode {
    let futures_soft = |id: &str, c: &Check| match c {
        Check::ReferenceWithin { .. } => false,
        Check::DiffNear { order, .. } => *order >= 1,
        Check::MaxAbsDiffExceeds { .. } => id == "fig-futures-T10",
        _ => false,
    };
    let cev_soft = |_: &str, c: &Check| matches!(c, Check::MaxAbsDiffAtMost { .. });
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Verdict>)> = vec![
        (1, "Heston price table", Box::new(|| experiments_verdict(&["table-hest-A", "table-hest-B"], &hard))),
        (
            2,
            "Heston greek tables",
            Box::new(|| {
                experiments_verdict(
                    &[
                        "table-hest-delta-A",
                        "table-hest-delta-B",
                        "table-hest-gamma-A",
                        "table-hest-gamma-B",
                        "table-hest-vega-A",
                        "table-hest-vega-B",
                    ],
                    &hard,
                )
            }),
        ),
        (3, "order zero equals the baseline", Box::new(order_zero_is_baseline)),
        (4, "Heston convergence shape", Box::new(|| experiments_verdict(&["fig-heston-convergence"], &|_, _| true))),
        (5, "put series parity", Box::new(put_parity)),
        (
            6,
            "CEV prices against simulation",
            Box::new(move || experiments_verdict(&["table-cev-gamma06", "table-cev-gamma133"], &cev_soft)),
        ),
        (7, "CEV at gamma 0.5 against transform", Box::new(|| experiments_verdict(&["cev-gamma05-crosscheck"], &hard))),
        (
            8,
            "OU volatility convergence and divergence",
            Box::new(|| experiments_verdict(&["fig-ss-convergence"], &hard)),
        ),
        (9, "OU volatility sensitivity instability", Box::new(|| experiments_verdict(&["table-sz-vega-B"], &hard))),
        (
            10,
            "commodity futures",
            Box::new(move || experiments_verdict(&["fig-futures-T05", "fig-futures-T10"], &futures_soft)),
        ),
        (11, "branch-cut correction", Box::new(branch_cut)),
        (12, "property suites", Box::new(property_suites)),
    ];

    let mut unexpected = Vec::new();
    for (n, name, f) in &criteria {
        let v = f();
        for line in &v.detail {
            println!("        {line}");
        }
        let tag = match (v.passed, v.known_only && KNOWN.contains(n)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known deviation)",
            (false, false) => "FAIL",
        };
        println!("criterion {n:>2} {name}: {tag}");
        if !v.passed && !(v.known_only && KNOWN.contains(n)) {
            unexpected.push(*n);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: no unexpected failures");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures in criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
