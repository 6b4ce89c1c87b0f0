use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use thiserror::Error;

use super::node::{Expression, Kind};

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function, accurate to a few ulps in the tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    Unbound(String),
    #[error("{op} is undefined at {arg} in {}", truncated(.expr))]
    Domain { op: &'static str, arg: f64, expr: Expression },
    #[error("non-finite value in {}", truncated(.expr))]
    NonFinite { expr: Expression },
}

fn truncated(e: &Expression) -> String {
    let s = e.to_string();
    if s.len() > 160 {
        format!("{}...", &s[..160])
    } else {
        s
    }
}

/// Assignment of values to variable names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Binding {
    values: BTreeMap<String, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        let mut b = Self::new();
        for (k, v) in pairs {
            b.set(k, *v);
        }
        b
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Clone, Copy)]
enum Op {
    Const(f64),
    Var(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, u32),
    Exp(u32),
    Ln(u32),
    Sqrt(u32),
    Abs(u32),
    Sign(u32),
    Pdf(u32),
    Cdf(u32),
}

/// An expression flattened into a topologically ordered instruction list.
///
/// Each distinct node is computed once per evaluation, so sharing in the
/// expression DAG carries over to evaluation cost.
#[derive(Clone)]
pub struct Tape {
    ops: Vec<Op>,
    nodes: Vec<Expression>,
    vars: Vec<Arc<str>>,
}

impl Tape {
    pub fn compile(root: &Expression) -> Tape {
        let mut index: HashMap<usize, u32> = HashMap::new();
        let mut ops = Vec::new();
        let mut nodes = Vec::new();
        let mut vars: Vec<Arc<str>> = Vec::new();
        let mut stack: Vec<(Expression, bool)> = vec![(root.clone(), false)];
        while let Some((e, expanded)) = stack.pop() {
            if index.contains_key(&e.addr()) {
                continue;
            }
            if !expanded {
                stack.push((e.clone(), true));
                for ch in e.kind().children().to_vec().into_iter().rev() {
                    if !index.contains_key(&ch.addr()) {
                        stack.push((ch.clone(), false));
                    }
                }
                continue;
            }
            let ix = |x: &Expression| index[&x.addr()];
            let op = match e.kind() {
                Kind::Const(c) => Op::Const(*c),
                Kind::Var(n) => {
                    let slot = match vars.iter().position(|v| v == n) {
                        Some(i) => i,
                        None => {
                            vars.push(n.clone());
                            vars.len() - 1
                        }
                    };
                    Op::Var(slot as u32)
                }
                Kind::Neg(a) => Op::Neg(ix(a)),
                Kind::Add(a, b) => Op::Add(ix(a), ix(b)),
                Kind::Sub(a, b) => Op::Sub(ix(a), ix(b)),
                Kind::Mul(a, b) => Op::Mul(ix(a), ix(b)),
                Kind::Div(a, b) => Op::Div(ix(a), ix(b)),
                Kind::Pow(a, b) => Op::Pow(ix(a), ix(b)),
                Kind::Exp(a) => Op::Exp(ix(a)),
                Kind::Ln(a) => Op::Ln(ix(a)),
                Kind::Sqrt(a) => Op::Sqrt(ix(a)),
                Kind::Abs(a) => Op::Abs(ix(a)),
                Kind::Sign(a) => Op::Sign(ix(a)),
                Kind::NormalPdf(a) => Op::Pdf(ix(a)),
                Kind::NormalCdf(a) => Op::Cdf(ix(a)),
            };
            index.insert(e.addr(), ops.len() as u32);
            ops.push(op);
            nodes.push(e);
        }
        Tape { ops, nodes, vars }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Variable names in slot order, as expected by [`Tape::eval_slots`].
    pub fn variables(&self) -> &[Arc<str>] {
        &self.vars
    }

    pub fn eval(&self, binding: &Binding) -> Result<f64, EvalError> {
        let slots = self
            .vars
            .iter()
            .map(|v| binding.get(v).ok_or_else(|| EvalError::Unbound(v.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        self.eval_slots(&slots)
    }

    pub fn eval_slots(&self, slots: &[f64]) -> Result<f64, EvalError> {
        let mut val = vec![0.0f64; self.ops.len()];
        for (i, op) in self.ops.iter().enumerate() {
            let g = |j: &u32| val[*j as usize];
            let dom = |op: &'static str, arg: f64| EvalError::Domain { op, arg, expr: self.nodes[i].clone() };
            let x = match op {
                Op::Const(c) => *c,
                Op::Var(s) => slots[*s as usize],
                Op::Neg(a) => -g(a),
                Op::Add(a, b) => g(a) + g(b),
                Op::Sub(a, b) => g(a) - g(b),
                Op::Mul(a, b) => g(a) * g(b),
                Op::Div(a, b) => {
                    let d = g(b);
                    if d == 0.0 {
                        return Err(dom("division", d));
                    }
                    g(a) / d
                }
                Op::Pow(a, b) => {
                    let (base, p) = (g(a), g(b));
                    if base < 0.0 && p.fract() != 0.0 {
                        return Err(dom("power", base));
                    }
                    if base == 0.0 && p < 0.0 {
                        return Err(dom("power", base));
                    }
                    if p == 2.0 {
                        base * base
                    } else if p.fract() == 0.0 && p.abs() <= 64.0 {
                        base.powi(p as i32)
                    } else {
                        base.powf(p)
                    }
                }
                Op::Exp(a) => g(a).exp(),
                Op::Ln(a) => {
                    let x = g(a);
                    if x <= 0.0 {
                        return Err(dom("ln", x));
                    }
                    x.ln()
                }
                Op::Sqrt(a) => {
                    let x = g(a);
                    if x < 0.0 {
                        return Err(dom("sqrt", x));
                    }
                    x.sqrt()
                }
                Op::Abs(a) => g(a).abs(),
                Op::Sign(a) => sign(g(a)),
                Op::Pdf(a) => normal_pdf(g(a)),
                Op::Cdf(a) => normal_cdf(g(a)),
            };
            if !x.is_finite() {
                return Err(EvalError::NonFinite { expr: self.nodes[i].clone() });
            }
            val[i] = x;
        }
        Ok(*val.last().expect("tape is never empty"))
    }
}

/// Evaluates an expression at a binding. Every variable must be bound.
pub fn evaluate(e: &Expression, binding: &Binding) -> Result<f64, EvalError> {
    Tape::compile(e).eval(binding)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_exp_ln() {
        let x = Expression::var("x");
        let e = x.ln().exp();
        let got = evaluate(&e, &Binding::from_pairs(&[("x", 7.25)])).unwrap();
        assert!((got - 7.25).abs() < 1e-14);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert_eq!(normal_cdf(0.0), 0.5);
        // Far tail value from a high-precision table.
        assert!((normal_cdf(-10.0) / 7.619853024160527e-24 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn unbound_variable() {
        let e = Expression::var("q") + 1.0;
        match evaluate(&e, &Binding::new()) {
            Err(EvalError::Unbound(n)) => assert_eq!(n, "q"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ln_of_negative_names_the_node() {
        let e = Expression::var("x").ln();
        match evaluate(&e, &Binding::from_pairs(&[("x", -1.0)])) {
            Err(EvalError::Domain { op, expr, .. }) => {
                assert_eq!(op, "ln");
                assert!(expr.ptr_eq(&e));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn integer_powers_of_negative_base() {
        let e = Expression::var("x").powf(3.0);
        assert_eq!(evaluate(&e, &Binding::from_pairs(&[("x", -2.0)])).unwrap(), -8.0);
        let frac = Expression::var("x").powf(0.5);
        assert!(evaluate(&frac, &Binding::from_pairs(&[("x", -2.0)])).is_err());
    }

    #[test]
    fn tape_reuses_shared_nodes() {
        let x = Expression::var("x");
        let s = (&x * 3.0).exp();
        let e = super::super::build::add(s.clone(), s.normal_cdf());
        let tape = Tape::compile(&e);
        assert_eq!(tape.len(), e.dag_size());
    }
}
