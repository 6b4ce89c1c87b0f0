use std::collections::HashMap;
use std::sync::Arc;

use super::build::{add, div, mul, neg, normal_pdf, sign, sub};
use super::node::{Expression, Kind};

/// Differentiation with a cache shared across calls.
///
/// Results are memoised per (node, variable), so repeated derivatives of
/// expressions that share structure cost time proportional to the number of
/// distinct nodes, not the size of the expanded tree.
#[derive(Default)]
pub struct Differentiator {
    cache: HashMap<(usize, Arc<str>), (Expression, Expression)>,
}

impl Differentiator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }

    /// Partial derivative of `e` with respect to the variable `var`.
    pub fn diff(&mut self, e: &Expression, var: &str) -> Expression {
        let var: Arc<str> = Arc::from(var);
        self.diff_inner(e, &var)
    }

    /// Repeated partial derivative, applying `vars` left to right.
    pub fn diff_many(&mut self, e: &Expression, vars: &[&str]) -> Expression {
        vars.iter().fold(e.clone(), |acc, v| self.diff(&acc, v))
    }

    fn diff_inner(&mut self, e: &Expression, var: &Arc<str>) -> Expression {
        if !e.depends_on(var) {
            return Expression::constant(0.0);
        }
        let key = (e.addr(), var.clone());
        if let Some((_, d)) = self.cache.get(&key) {
            return d.clone();
        }
        let d = self.rule(e, var);
        self.cache.insert(key, (e.clone(), d.clone()));
        d
    }

    fn rule(&mut self, e: &Expression, var: &Arc<str>) -> Expression {
        let one = || Expression::constant(1.0);
        match e.kind() {
            Kind::Const(_) => Expression::constant(0.0),
            Kind::Var(n) => {
                if n == var {
                    one()
                } else {
                    Expression::constant(0.0)
                }
            }
            Kind::Neg(a) => neg(self.diff_inner(a, var)),
            Kind::Add(a, b) => {
                let (da, db) = (self.diff_inner(a, var), self.diff_inner(b, var));
                add(da, db)
            }
            Kind::Sub(a, b) => {
                let (da, db) = (self.diff_inner(a, var), self.diff_inner(b, var));
                sub(da, db)
            }
            Kind::Mul(a, b) => {
                let (da, db) = (self.diff_inner(a, var), self.diff_inner(b, var));
                add(mul(da, b.clone()), mul(a.clone(), db))
            }
            Kind::Div(a, b) => {
                let (da, db) = (self.diff_inner(a, var), self.diff_inner(b, var));
                let first = div(da, b.clone());
                if db.is_zero() {
                    return first;
                }
                sub(first, div(mul(a.clone(), db), mul(b.clone(), b.clone())))
            }
            Kind::Pow(a, b) => {
                let da = self.diff_inner(a, var);
                match b.as_const() {
                    Some(p) => mul(mul(Expression::constant(p), a.powf(p - 1.0)), da),
                    None => {
                        // a^b = exp(b ln a)
                        let db = self.diff_inner(b, var);
                        let inner = add(mul(db, a.ln()), div(mul(b.clone(), da), a.clone()));
                        mul(e.clone(), inner)
                    }
                }
            }
            Kind::Exp(a) => {
                let da = self.diff_inner(a, var);
                mul(e.clone(), da)
            }
            Kind::Ln(a) => {
                let da = self.diff_inner(a, var);
                div(da, a.clone())
            }
            Kind::Sqrt(a) => {
                let da = self.diff_inner(a, var);
                div(da, mul(Expression::constant(2.0), e.clone()))
            }
            Kind::Abs(a) => {
                let da = self.diff_inner(a, var);
                mul(sign(a.clone()), da)
            }
            Kind::Sign(_) => Expression::constant(0.0),
            Kind::NormalPdf(a) => {
                let da = self.diff_inner(a, var);
                neg(mul(mul(a.clone(), e.clone()), da))
            }
            Kind::NormalCdf(a) => {
                let da = self.diff_inner(a, var);
                mul(normal_pdf(a.clone()), da)
            }
        }
    }
}

/// Partial derivative with a fresh cache.
pub fn differentiate(e: &Expression, var: &str) -> Expression {
    Differentiator::new().diff(e, var)
}
