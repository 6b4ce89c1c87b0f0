//! Generators and checks shared by the property suite and the acceptance run.
#![allow(dead_code)]

use kmexpand::diagnostics::log_scale_density;
use kmexpand::fourier::{integrate, QuadratureSpec};
use kmexpand::mc::{simulate_cev_call, McConfig, McResult};
use kmexpand::models::CevParams;
use kmexpand::symx::{differentiate, evaluate, simplify, Binding, Expression, Kind, NodeKind};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Expression shape over `x` and `y`. Every subtree is positive and bounded
/// for `x, y` in [0.5, 2], so all operators stay inside their domains.
#[derive(Clone, Debug)]
pub enum Tree {
    X,
    Y,
    C(f64),
    Add(Box<Tree>, Box<Tree>),
    Mul(Box<Tree>, Box<Tree>),
    Div(Box<Tree>, Box<Tree>),
    Sqrt(Box<Tree>),
    /// `exp(-sqrt(a))`
    ExpNeg(Box<Tree>),
    /// `ln(1 + a)`
    Ln1p(Box<Tree>),
    /// `ncdf(a - b)`
    CdfDiff(Box<Tree>, Box<Tree>),
    /// `npdf(ln(1 + a))`
    PdfLn(Box<Tree>),
    /// `a ^ c`
    PowC(Box<Tree>, f64),
    /// `1 + |a - b|`; has a kink, so only used when kinks are allowed.
    AbsDiff(Box<Tree>, Box<Tree>),
}

fn node(tag: NodeKind, args: Vec<Expression>) -> Expression {
    Expression::node(Kind::from_parts(tag, args))
}

impl Tree {
    /// Builds the expression node by node, bypassing the simplifying constructors.
    pub fn raw(&self) -> Expression {
        use NodeKind as N;
        let c = Expression::constant;
        match self {
            Tree::X => Expression::var("x"),
            Tree::Y => Expression::var("y"),
            Tree::C(v) => c(*v),
            Tree::Add(a, b) => node(N::Add, vec![a.raw(), b.raw()]),
            Tree::Mul(a, b) => node(N::Mul, vec![a.raw(), b.raw()]),
            Tree::Div(a, b) => node(N::Div, vec![a.raw(), b.raw()]),
            Tree::Sqrt(a) => node(N::Sqrt, vec![a.raw()]),
            Tree::ExpNeg(a) => node(N::Exp, vec![node(N::Neg, vec![node(N::Sqrt, vec![a.raw()])])]),
            Tree::Ln1p(a) => node(N::Ln, vec![node(N::Add, vec![c(1.0), a.raw()])]),
            Tree::CdfDiff(a, b) => node(N::NormalCdf, vec![node(N::Sub, vec![a.raw(), b.raw()])]),
            Tree::PdfLn(a) => node(N::NormalPdf, vec![node(N::Ln, vec![node(N::Add, vec![c(1.0), a.raw()])])]),
            Tree::PowC(a, p) => node(N::Pow, vec![a.raw(), c(*p)]),
            Tree::AbsDiff(a, b) => node(N::Add, vec![c(1.0), node(N::Abs, vec![node(N::Sub, vec![a.raw(), b.raw()])])]),
        }
    }

    /// The same expression through the operator overloads.
    pub fn built(&self) -> Expression {
        match self {
            Tree::X => Expression::var("x"),
            Tree::Y => Expression::var("y"),
            Tree::C(v) => Expression::constant(*v),
            Tree::Add(a, b) => a.built() + b.built(),
            Tree::Mul(a, b) => a.built() * b.built(),
            Tree::Div(a, b) => a.built() / b.built(),
            Tree::Sqrt(a) => a.built().sqrt(),
            Tree::ExpNeg(a) => (-a.built().sqrt()).exp(),
            Tree::Ln1p(a) => (a.built() + 1.0).ln(),
            Tree::CdfDiff(a, b) => (a.built() - b.built()).normal_cdf(),
            Tree::PdfLn(a) => (a.built() + 1.0).ln().normal_pdf(),
            Tree::PowC(a, p) => a.built().powf(*p),
            Tree::AbsDiff(a, b) => (a.built() - b.built()).abs() + 1.0,
        }
    }
}

pub fn tree(kinks: bool) -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![Just(Tree::X), Just(Tree::Y), (0.5f64..2.0).prop_map(Tree::C)];
    leaf.prop_recursive(3, 16, 2, move |inner| {
        let b = move || inner.clone().prop_map(Box::new);
        let mut ops = vec![
            (b(), b()).prop_map(|(a, c)| Tree::Add(a, c)).boxed(),
            (b(), b()).prop_map(|(a, c)| Tree::Mul(a, c)).boxed(),
            (b(), b()).prop_map(|(a, c)| Tree::Div(a, c)).boxed(),
            b().prop_map(Tree::Sqrt).boxed(),
            b().prop_map(Tree::ExpNeg).boxed(),
            b().prop_map(Tree::Ln1p).boxed(),
            (b(), b()).prop_map(|(a, c)| Tree::CdfDiff(a, c)).boxed(),
            b().prop_map(Tree::PdfLn).boxed(),
            (b(), -2.0f64..2.0).prop_map(|(a, p)| Tree::PowC(a, p)).boxed(),
        ];
        if kinks {
            ops.push((b(), b()).prop_map(|(a, c)| Tree::AbsDiff(a, c)).boxed());
        }
        proptest::strategy::Union::new(ops)
    })
}

pub fn point() -> impl Strategy<Value = (f64, f64)> {
    (0.5f64..2.0, 0.5f64..2.0)
}

fn at(e: &Expression, x: f64, y: f64) -> f64 {
    evaluate(e, &Binding::from_pairs(&[("x", x), ("y", y)])).unwrap_or(f64::NAN)
}

/// Richardson-extrapolated central difference in `x`; truncation error is
/// fourth order in the step.
pub fn fd_x(e: &Expression, x: f64, y: f64) -> f64 {
    let h = 1e-3 * (1.0 + x.abs());
    let d = |h: f64| (at(e, x + h, y) - at(e, x - h, y)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Symbolic derivative against finite differences, relative error below 1e-5.
/// Slopes many orders below the function value are compared against a floor
/// set by that value, since the difference quotient cannot resolve them.
pub fn check_derivative(t: &Tree, x: f64, y: f64) -> Result<(), TestCaseError> {
    let e = t.built();
    let f = at(&e, x, y);
    prop_assume!(f.is_finite());
    let d = at(&differentiate(&e, "x"), x, y);
    let fd = fd_x(&e, x, y);
    let scale = d.abs().max(fd.abs()).max(1e-7 * f.abs()).max(1e-12);
    let rel = (d - fd).abs() / scale;
    prop_assert!(rel < 1e-5, "d/dx {d} vs fd {fd} (rel {rel:e}) for {t:?} at ({x}, {y})");
    Ok(())
}

/// Simplification preserves the value to 1e-12, relative to the value or 1.
pub fn check_simplify(t: &Tree, x: f64, y: f64) -> Result<(), TestCaseError> {
    let raw = t.raw();
    let a = at(&raw, x, y);
    prop_assume!(a.is_finite());
    let b = at(&simplify(&raw), x, y);
    let err = (a - b).abs() / a.abs().max(1.0);
    prop_assert!(err < 1e-12, "raw {a} vs simplified {b} (err {err:e}) for {t:?} at ({x}, {y})");
    Ok(())
}

pub fn small_mc(seed: u64) -> McResult {
    let p = CevParams { kappa: 2.0, theta: 0.04, omega: 0.3, rho: -0.5, r: 0.05, gamma: 0.75 };
    simulate_cev_call(&p, 100.0, 0.04, 100.0, 0.5, &McConfig::new(25, 400, seed)).unwrap()
}

fn bits(r: &McResult) -> [u64; 4] {
    [r.estimate.to_bits(), r.std_error.to_bits(), r.ci_lower.to_bits(), r.ci_upper.to_bits()]
}

/// Same seed gives bit-identical results, also on a single worker thread.
pub fn check_mc_determinism(seed: u64) -> Result<(), TestCaseError> {
    let a = small_mc(seed);
    let b = small_mc(seed);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| small_mc(seed));
    prop_assert_eq!(bits(&a), bits(&b));
    prop_assert_eq!(bits(&a), bits(&c));
    prop_assert_eq!(a.negative_variance_events, c.negative_variance_events);
    Ok(())
}

pub fn scale_params() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    let gamma = prop_oneof![Just(0.5), Just(1.0), 0.3f64..1.6];
    (0.1f64..5.0, 0.01f64..1.0, 0.1f64..1.0, gamma, 0.01f64..10.0)
}

/// The closed-form log scale density differs between `v` and 1 by the
/// quadrature of `-2 mu / sigma^2`, to 1e-8 relative. Differences smaller
/// than 1e-6 (v next to 1) are compared absolutely at that floor.
pub fn check_scale_density(kappa: f64, theta: f64, omega: f64, gamma: f64, v: f64) -> Result<(), TestCaseError> {
    let closed = log_scale_density(kappa, theta, omega, gamma, v).unwrap()
        - log_scale_density(kappa, theta, omega, gamma, 1.0).unwrap();
    let integrand = |u: f64| -2.0 * kappa * (theta - u) / (omega * omega * u.powf(2.0 * gamma));
    let spec = QuadratureSpec { abs_tol: 1e-15, rel_tol: 1e-13, max_panels: 20_000, ..QuadratureSpec::default() };
    let quad = integrate(&integrand, 1.0, v, &spec).unwrap().value;
    let err = (closed - quad).abs() / closed.abs().max(1e-6);
    prop_assert!(err < 1e-8, "closed {closed} vs quadrature {quad} (err {err:e}) at gamma {gamma}, v {v}");
    Ok(())
}
