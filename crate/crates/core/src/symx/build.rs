//! Simplifying constructors.
//!
//! Every operator on [`Expression`] goes through these, so expressions are kept
//! in a light canonical form as they are built: constants folded and pulled to
//! the left of products, additive and multiplicative identities dropped, like
//! terms collected and equal-base powers merged.

use std::collections::HashMap;
use std::ops;

use super::node::{Expression, Kind};

fn c(x: f64) -> Expression {
    Expression::constant(x)
}

fn fold(x: f64) -> Option<Expression> {
    x.is_finite().then(|| c(x))
}

/// Splits `k * rest` into its numeric coefficient and remainder.
fn split_coef(e: &Expression) -> (f64, Expression) {
    match e.kind() {
        Kind::Mul(a, b) => match a.as_const() {
            Some(k) => (k, b.clone()),
            None => (1.0, e.clone()),
        },
        Kind::Neg(a) => {
            let (k, rest) = split_coef(a);
            (-k, rest)
        }
        _ => (1.0, e.clone()),
    }
}

/// Splits `base ^ p` for a constant `p`; square roots count as `p = 0.5`.
fn split_power(e: &Expression) -> (Expression, f64) {
    match e.kind() {
        Kind::Pow(a, b) => match b.as_const() {
            Some(p) => (a.clone(), p),
            None => (e.clone(), 1.0),
        },
        Kind::Sqrt(a) => (a.clone(), 0.5),
        _ => (e.clone(), 1.0),
    }
}

fn ordered(a: Expression, b: Expression) -> (Expression, Expression) {
    if a.structural_hash() > b.structural_hash() {
        (b, a)
    } else {
        (a, b)
    }
}

pub fn add(a: Expression, b: Expression) -> Expression {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            if let Some(e) = fold(x + y) {
                return e;
            }
        }
        (Some(x), None) if x == 0.0 => return b,
        (None, Some(y)) if y == 0.0 => return a,
        (None, Some(_)) => return add(b, a),
        _ => {}
    }
    if let Kind::Neg(y) = b.kind() {
        return sub(a, y.clone());
    }
    if let Kind::Neg(x) = a.kind() {
        return sub(b, x.clone());
    }
    if a.as_const().is_none() {
        let (ka, ra) = split_coef(&a);
        let (kb, rb) = split_coef(&b);
        if ra.ptr_eq(&rb) {
            return mul(c(ka + kb), ra);
        }
    }
    if a.as_const().is_some() {
        return Expression::node(Kind::Add(a, b));
    }
    let (a, b) = ordered(a, b);
    Expression::node(Kind::Add(a, b))
}

pub fn sub(a: Expression, b: Expression) -> Expression {
    if a.ptr_eq(&b) {
        return c(0.0);
    }
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            if let Some(e) = fold(x - y) {
                return e;
            }
        }
        (Some(x), None) if x == 0.0 => return neg(b),
        (None, Some(y)) if y == 0.0 => return a,
        _ => {}
    }
    if let Kind::Neg(y) = b.kind() {
        return add(a, y.clone());
    }
    if a.as_const().is_none() && b.as_const().is_none() {
        let (ka, ra) = split_coef(&a);
        let (kb, rb) = split_coef(&b);
        if ra.ptr_eq(&rb) {
            return mul(c(ka - kb), ra);
        }
    }
    Expression::node(Kind::Sub(a, b))
}

pub fn neg(a: Expression) -> Expression {
    match a.kind() {
        Kind::Const(x) => c(-x),
        Kind::Neg(x) => x.clone(),
        Kind::Sub(x, y) => Expression::node(Kind::Sub(y.clone(), x.clone())),
        Kind::Mul(x, y) if x.as_const().is_some() => mul(c(-x.as_const().unwrap()), y.clone()),
        _ => Expression::node(Kind::Neg(a)),
    }
}

pub fn mul(a: Expression, b: Expression) -> Expression {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            if let Some(e) = fold(x * y) {
                return e;
            }
        }
        (Some(x), _) if x == 0.0 => return c(0.0),
        (_, Some(y)) if y == 0.0 => return c(0.0),
        (Some(x), None) if x == 1.0 => return b,
        (None, Some(y)) if y == 1.0 => return a,
        (Some(x), None) if x == -1.0 => return neg(b),
        (None, Some(_)) => return mul(b, a),
        _ => {}
    }
    if let Some(k) = a.as_const() {
        // k * (m * x) and k * -x
        match b.kind() {
            Kind::Mul(m, x) if m.as_const().is_some() => {
                return mul(c(k * m.as_const().unwrap()), x.clone());
            }
            Kind::Neg(x) => return mul(c(-k), x.clone()),
            _ => return Expression::node(Kind::Mul(a, b)),
        }
    }
    if let Kind::Neg(x) = a.kind() {
        return neg(mul(x.clone(), b));
    }
    if let Kind::Neg(y) = b.kind() {
        return neg(mul(a, y.clone()));
    }
    if let Kind::Mul(m, x) = a.kind() {
        if let Some(k) = m.as_const() {
            return mul(c(k), mul(x.clone(), b));
        }
    }
    if let Kind::Mul(m, y) = b.kind() {
        if let Some(k) = m.as_const() {
            return mul(c(k), mul(a, y.clone()));
        }
    }
    let (ba, pa) = split_power(&a);
    let (bb, pb) = split_power(&b);
    if ba.ptr_eq(&bb) {
        return pow(ba, c(pa + pb));
    }
    let (a, b) = ordered(a, b);
    Expression::node(Kind::Mul(a, b))
}

pub fn div(a: Expression, b: Expression) -> Expression {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => {
            if let Some(e) = fold(x / y) {
                return e;
            }
        }
        (Some(x), _) if x == 0.0 => return c(0.0),
        (_, Some(y)) if y == 1.0 => return a,
        (None, Some(y)) if y != 0.0 => return mul(c(1.0 / y), a),
        _ => {}
    }
    if a.ptr_eq(&b) {
        return c(1.0);
    }
    // a / (x^p * y^q) = a * x^-p * y^-q, so repeated differentiation adds to
    // exponents instead of squaring denominators.
    let mut factors = vec![a];
    let mut coef = 1.0;
    let mut stack = vec![b];
    while let Some(f) = stack.pop() {
        match f.kind() {
            Kind::Mul(x, y) => {
                stack.push(x.clone());
                stack.push(y.clone());
            }
            Kind::Neg(x) => {
                coef = -coef;
                stack.push(x.clone());
            }
            Kind::Const(k) => coef /= k,
            _ => {
                let (base, p) = split_power(&f);
                factors.push(pow(base, c(-p)));
            }
        }
    }
    if coef != 1.0 {
        factors.push(c(coef));
    }
    factors.into_iter().reduce(mul).unwrap()
}

pub fn pow(a: Expression, b: Expression) -> Expression {
    if let Some(p) = b.as_const() {
        if p == 0.0 {
            return c(1.0);
        }
        if p == 1.0 {
            return a;
        }
        if let Some(x) = a.as_const() {
            if (x > 0.0 || p.fract() == 0.0) && !(x == 0.0 && p < 0.0) {
                if let Some(e) = fold(x.powf(p)) {
                    return e;
                }
            }
        }
    }
    if a.is_const(1.0) {
        return c(1.0);
    }
    Expression::node(Kind::Pow(a, b))
}

pub fn exp(a: Expression) -> Expression {
    match a.as_const().and_then(|x| fold(x.exp())) {
        Some(e) => e,
        None => Expression::node(Kind::Exp(a)),
    }
}

pub fn ln(a: Expression) -> Expression {
    match a.as_const() {
        Some(x) if x > 0.0 => c(x.ln()),
        _ => Expression::node(Kind::Ln(a)),
    }
}

pub fn sqrt(a: Expression) -> Expression {
    match a.as_const() {
        Some(x) if x >= 0.0 => c(x.sqrt()),
        _ => Expression::node(Kind::Sqrt(a)),
    }
}

pub fn abs(a: Expression) -> Expression {
    match a.kind() {
        Kind::Const(x) => c(x.abs()),
        Kind::Abs(_) => a,
        Kind::Neg(x) => abs(x.clone()),
        _ => Expression::node(Kind::Abs(a)),
    }
}

pub fn sign(a: Expression) -> Expression {
    match a.as_const() {
        Some(x) => c(super::eval::sign(x)),
        None => Expression::node(Kind::Sign(a)),
    }
}

pub fn normal_pdf(a: Expression) -> Expression {
    match a.as_const() {
        Some(x) => c(super::eval::normal_pdf(x)),
        None => Expression::node(Kind::NormalPdf(a)),
    }
}

pub fn normal_cdf(a: Expression) -> Expression {
    match a.as_const() {
        Some(x) => c(super::eval::normal_cdf(x)),
        None => Expression::node(Kind::NormalCdf(a)),
    }
}

/// Product of factors, flattening nested products and merging powers of a
/// common base, e.g. `(a * sqrt(v)) * (b * sqrt(v))` becomes `(a*b) * v`.
pub fn product(factors: Vec<Expression>) -> Expression {
    fn flatten(e: Expression, coef: &mut f64, out: &mut Vec<Expression>) {
        match e.kind() {
            Kind::Const(k) => *coef *= k,
            Kind::Mul(a, b) => {
                flatten(a.clone(), coef, out);
                flatten(b.clone(), coef, out);
            }
            Kind::Neg(a) => {
                *coef = -*coef;
                flatten(a.clone(), coef, out);
            }
            _ => out.push(e),
        }
    }
    let mut coef = 1.0;
    let mut flat = Vec::new();
    for f in factors {
        flatten(f, &mut coef, &mut flat);
    }
    let mut merged: Vec<(Expression, f64)> = Vec::new();
    for f in flat {
        let (base, p) = split_power(&f);
        match merged.iter_mut().find(|(b, _)| b.ptr_eq(&base)) {
            Some(slot) => slot.1 += p,
            None => merged.push((base, p)),
        }
    }
    merged.into_iter().fold(c(coef), |acc, (base, p)| mul(acc, pow(base, c(p))))
}

/// Sum of a list, built as a balanced tree to keep depth logarithmic.
pub fn sum(mut terms: Vec<Expression>) -> Expression {
    terms.retain(|t| !t.is_zero());
    match terms.len() {
        0 => c(0.0),
        1 => terms.pop().unwrap(),
        n => {
            let right = terms.split_off(n / 2);
            add(sum(terms), sum(right))
        }
    }
}

/// Rebuilds an expression bottom-up through the simplifying constructors.
///
/// Applying the canonical rules again is a fixed point, so the result of
/// `simplify` simplifies to itself.
pub fn simplify(e: &Expression) -> Expression {
    let mut memo = HashMap::new();
    simplify_memo(e, &mut memo)
}

fn simplify_memo(e: &Expression, memo: &mut HashMap<usize, (Expression, Expression)>) -> Expression {
    if let Some((_, out)) = memo.get(&e.addr()) {
        return out.clone();
    }
    let mut s = |x: &Expression| simplify_memo(x, memo);
    let out = match e.kind() {
        Kind::Const(_) | Kind::Var(_) => e.clone(),
        Kind::Neg(a) => neg(s(a)),
        Kind::Add(a, b) => {
            let (a, b) = (s(a), s(b));
            add(a, b)
        }
        Kind::Sub(a, b) => {
            let (a, b) = (s(a), s(b));
            sub(a, b)
        }
        Kind::Mul(a, b) => {
            let (a, b) = (s(a), s(b));
            mul(a, b)
        }
        Kind::Div(a, b) => {
            let (a, b) = (s(a), s(b));
            div(a, b)
        }
        Kind::Pow(a, b) => {
            let (a, b) = (s(a), s(b));
            pow(a, b)
        }
        Kind::Exp(a) => exp(s(a)),
        Kind::Ln(a) => ln(s(a)),
        Kind::Sqrt(a) => sqrt(s(a)),
        Kind::Abs(a) => abs(s(a)),
        Kind::Sign(a) => sign(s(a)),
        Kind::NormalPdf(a) => normal_pdf(s(a)),
        Kind::NormalCdf(a) => normal_cdf(s(a)),
    };
    memo.insert(e.addr(), (e.clone(), out.clone()));
    out
}

impl Expression {
    pub fn exp(&self) -> Expression {
        exp(self.clone())
    }
    pub fn ln(&self) -> Expression {
        ln(self.clone())
    }
    pub fn sqrt(&self) -> Expression {
        sqrt(self.clone())
    }
    pub fn abs(&self) -> Expression {
        abs(self.clone())
    }
    pub fn powf(&self, p: f64) -> Expression {
        pow(self.clone(), Expression::constant(p))
    }
    pub fn pow(&self, p: &Expression) -> Expression {
        pow(self.clone(), p.clone())
    }
    pub fn normal_pdf(&self) -> Expression {
        normal_pdf(self.clone())
    }
    pub fn normal_cdf(&self) -> Expression {
        normal_cdf(self.clone())
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $f:ident) => {
        impl ops::$trait<Expression> for Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                $f(self, rhs)
            }
        }
        impl ops::$trait<&Expression> for Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                $f(self, rhs.clone())
            }
        }
        impl ops::$trait<Expression> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                $f(self.clone(), rhs)
            }
        }
        impl ops::$trait<&Expression> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                $f(self.clone(), rhs.clone())
            }
        }
        impl ops::$trait<f64> for Expression {
            type Output = Expression;
            fn $method(self, rhs: f64) -> Expression {
                $f(self, Expression::constant(rhs))
            }
        }
        impl ops::$trait<f64> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: f64) -> Expression {
                $f(self.clone(), Expression::constant(rhs))
            }
        }
        impl ops::$trait<Expression> for f64 {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                $f(Expression::constant(self), rhs)
            }
        }
        impl ops::$trait<&Expression> for f64 {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                $f(Expression::constant(self), rhs.clone())
            }
        }
    };
}

binop!(Add, add, add);
binop!(Sub, sub, sub);
binop!(Mul, mul, mul);
binop!(Div, div, div);

impl ops::Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        neg(self)
    }
}

impl ops::Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        neg(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symx::NodeKind;

    fn x() -> Expression {
        Expression::var("x")
    }

    #[test]
    fn folds_constants() {
        assert_eq!((Expression::constant(2.0) * 3.0).as_const(), Some(6.0));
        assert_eq!((Expression::constant(2.0) + 3.0).as_const(), Some(5.0));
    }

    #[test]
    fn multiplication_by_zero_collapses() {
        let raw = Expression::node(Kind::Mul(Expression::constant(0.0), Expression::var("S").normal_cdf()));
        assert!(simplify(&raw).is_zero());
    }

    #[test]
    fn self_difference_vanishes() {
        assert!((x() - x()).is_zero());
        assert!((2.0 * x() - 2.0 * x()).is_zero());
    }

    #[test]
    fn like_terms_collect() {
        let e = 2.0 * x() + 3.0 * x();
        assert_eq!(e.tag(), NodeKind::Mul);
        match e.kind() {
            Kind::Mul(k, r) => {
                assert_eq!(k.as_const(), Some(5.0));
                assert!(r.ptr_eq(&x()));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn square_roots_merge() {
        let v = Expression::var("v");
        assert!((v.sqrt() * v.sqrt()).ptr_eq(&v));
        let p = v.powf(0.3) * v.powf(0.3);
        assert_eq!(p.tag(), NodeKind::Pow);
    }

    #[test]
    fn constants_move_left() {
        let e = x() * 4.0;
        match e.kind() {
            Kind::Mul(k, _) => assert_eq!(k.as_const(), Some(4.0)),
            _ => panic!("expected product"),
        }
        let nested = 2.0 * (x() * 4.0);
        match nested.kind() {
            Kind::Mul(k, _) => assert_eq!(k.as_const(), Some(8.0)),
            _ => panic!("expected product"),
        }
    }

    #[test]
    fn simplify_is_idempotent_here() {
        let raw = Expression::node(Kind::Add(
            Expression::node(Kind::Mul(Expression::constant(1.0), x())),
            Expression::node(Kind::Mul(x(), Expression::constant(0.0))),
        ));
        let once = simplify(&raw);
        assert!(once.ptr_eq(&x()));
        assert!(simplify(&once).ptr_eq(&once));
    }

    #[test]
    fn product_merges_roots() {
        let v = Expression::var("v");
        let s = Expression::var("S");
        let e = product(vec![v.sqrt() * &s, v.sqrt() * &s]);
        let want = mul(v.clone(), pow(s.clone(), c(2.0)));
        assert!(e.ptr_eq(&want), "{e}");
        let k = product(vec![3.0 * v.sqrt(), -(2.0 * v.sqrt())]);
        assert!(k.ptr_eq(&mul(c(-6.0), v)), "{k}");
    }

    #[test]
    fn balanced_sum_drops_zeros() {
        let e = sum(vec![Expression::constant(0.0), x(), Expression::constant(0.0)]);
        assert!(e.ptr_eq(&x()));
        assert!(sum(vec![]).is_zero());
    }
}
