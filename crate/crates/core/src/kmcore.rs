//! Series expansion of a price around a closed-form baseline.
//!
//! With `f0` the baseline price, the correction terms are
//! `delta_0 = (L - L0) f0` and `delta_n = L delta_{n-1} - r delta_{n-1}`, where
//! `L` and `L0` are the generators of the true and baseline models. The order-N
//! price is `f0 + sum_{n<=N} delta_n tau^(n+1)/(n+1)!`.

use crate::closedform::{bs_call_symbolic, bs_put_symbolic, schwartz_futures_symbolic, PriceVars};
use crate::error::{Error, Result};
use crate::models::{self, BaselineEmbedding, SdeModel, MATURITY, NUISANCE, TIME};
use crate::symx::{sum, Binding, Differentiator, Expression, Tape};

/// Highest supported expansion order.
pub const MAX_ORDER: usize = 6;

/// Whether the recursion subtracts the short-rate term. Futures prices are
/// not discounted, so their corrections omit it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMode {
    Discounted,
    Undiscounted,
}

/// What the baseline price pays, when known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Contract {
    Call { strike: f64, rate: f64 },
    Put { strike: f64, rate: f64 },
    Futures,
    Other,
}

/// Generator of a model, with its coefficients prepared once.
pub struct Generator {
    state: Vec<String>,
    drift: Vec<Expression>,
    /// Covariance with the diagonal halved; off-diagonal entries count twice
    /// and are stored once for i < j.
    second: Vec<(usize, usize, Expression)>,
}

impl Generator {
    pub fn new(m: &SdeModel) -> Self {
        let cov = m.covariance();
        Self::from_parts(m.state.clone(), m.drift.clone(), &cov)
    }

    fn from_parts(state: Vec<String>, drift: Vec<Expression>, cov: &[Vec<Expression>]) -> Self {
        let n = state.len();
        let mut second = Vec::new();
        for i in 0..n {
            for j in i..n {
                let c = if i == j { 0.5 * &cov[i][i] } else { cov[i][j].clone() };
                if !c.is_zero() {
                    second.push((i, j, c));
                }
            }
        }
        Generator { state, drift, second }
    }

    /// Applies the spatial part of the generator, plus the time derivative
    /// when `with_time` is set.
    pub fn apply(&self, f: &Expression, d: &mut Differentiator, with_time: bool) -> Expression {
        let mut terms = Vec::new();
        if with_time {
            terms.push(d.diff(f, TIME));
        }
        let first: Vec<Expression> = self.state.iter().map(|z| d.diff(f, z)).collect();
        for (mu, df) in self.drift.iter().zip(&first) {
            if !mu.is_zero() && !df.is_zero() {
                terms.push(mu * df);
            }
        }
        for (i, j, c) in &self.second {
            let dd = d.diff(&first[*i], &self.state[*j]);
            if !dd.is_zero() {
                terms.push(c * dd);
            }
        }
        sum(terms)
    }
}

/// `df/dt + sum mu_i df/dz_i + 1/2 sum cov_ij d2f/dz_i dz_j`.
pub fn generator(m: &SdeModel, f: &Expression) -> Expression {
    Generator::new(m).apply(f, &mut Differentiator::new(), true)
}

fn mismatch_generator(true_model: &SdeModel, embedding: &BaselineEmbedding) -> Result<Generator> {
    let base = &embedding.baseline;
    if base.state != true_model.state {
        return Err(Error::Invalid("baseline embedding does not match the true state space".into()));
    }
    let drift = true_model.drift.iter().zip(&base.drift).map(|(a, b)| a - b).collect();
    let (ct, cb) = (true_model.covariance(), base.covariance());
    let cov: Vec<Vec<Expression>> =
        ct.iter().zip(&cb).map(|(rt, rb)| rt.iter().zip(rb).map(|(a, b)| a - b).collect()).collect();
    Ok(Generator::from_parts(true_model.state.clone(), drift, &cov))
}

/// `(L - L0) f0`: the rate at which the baseline price fails the true pricing equation.
pub fn initial_mismatch(true_model: &SdeModel, embedding: &BaselineEmbedding, f0: &Expression) -> Result<Expression> {
    let g = mismatch_generator(true_model, embedding)?;
    Ok(g.apply(f0, &mut Differentiator::new(), false))
}

#[derive(Clone)]
pub struct KmExpansion {
    pub true_model: SdeModel,
    pub baseline: BaselineEmbedding,
    pub baseline_price: Expression,
    pub deltas: Vec<Expression>,
    /// Payoff corrections; zero because baselines share the true payoff.
    pub payoff_mismatch: Vec<Expression>,
    pub rate_mode: RateMode,
    pub contract: Contract,
    base_tape: Tape,
    tapes: Vec<Tape>,
}

/// Builds the correction terms up to `order`.
pub fn expand(
    true_model: &SdeModel,
    embedding: &BaselineEmbedding,
    f0: &Expression,
    order: usize,
    rate_mode: RateMode,
) -> Result<KmExpansion> {
    if order > MAX_ORDER {
        return Err(Error::Capability(format!("order {order} exceeds the maximum of {MAX_ORDER}")));
    }
    let mut d = Differentiator::new();
    let mismatch = mismatch_generator(true_model, embedding)?;
    let gen = Generator::new(true_model);
    let rate = match rate_mode {
        RateMode::Discounted => true_model.short_rate.clone(),
        RateMode::Undiscounted => Expression::constant(0.0),
    };
    let mut deltas = vec![mismatch.apply(f0, &mut d, false)];
    for _ in 0..order {
        let prev = deltas.last().unwrap();
        let next = gen.apply(prev, &mut d, true) - &rate * prev;
        deltas.push(next);
    }
    Ok(KmExpansion::assemble(true_model.clone(), embedding.clone(), f0.clone(), deltas, rate_mode, Contract::Other))
}

/// Prices at every truncation order for one binding.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderedQuote {
    /// `partial_sums[n]` is the order-n price; there are N + 2 entries with the
    /// baseline price first.
    pub partial_sums: Vec<f64>,
    pub tau: f64,
    pub binding: Binding,
}

impl OrderedQuote {
    pub fn baseline(&self) -> f64 {
        self.partial_sums[0]
    }

    /// Price truncated after the correction of order `n`.
    pub fn order(&self, n: usize) -> f64 {
        self.partial_sums[n + 1]
    }

    pub fn price(&self) -> f64 {
        *self.partial_sums.last().unwrap()
    }

    pub fn max_order(&self) -> usize {
        self.partial_sums.len() - 2
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Weight of the order-n correction.
pub fn term_weight(n: usize, tau: f64) -> f64 {
    tau.powi(n as i32 + 1) / factorial(n + 1)
}

/// Result of the nuisance-parameter search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuisanceFit {
    pub eta: f64,
    pub objective: f64,
}

impl KmExpansion {
    fn assemble(
        true_model: SdeModel,
        baseline: BaselineEmbedding,
        baseline_price: Expression,
        deltas: Vec<Expression>,
        rate_mode: RateMode,
        contract: Contract,
    ) -> Self {
        let base_tape = Tape::compile(&baseline_price);
        let tapes = deltas.iter().map(Tape::compile).collect();
        let payoff_mismatch = vec![Expression::constant(0.0); deltas.len()];
        KmExpansion {
            true_model,
            baseline,
            baseline_price,
            deltas,
            payoff_mismatch,
            rate_mode,
            contract,
            base_tape,
            tapes,
        }
    }

    pub fn order(&self) -> usize {
        self.deltas.len() - 1
    }

    /// Drops correction terms above `order`.
    pub fn truncated(&self, order: usize) -> KmExpansion {
        let mut x = self.clone();
        x.deltas.truncate(order + 1);
        x.tapes.truncate(order + 1);
        x.payoff_mismatch.truncate(order + 1);
        x
    }

    fn full_binding(&self, b: &Binding, tau: f64) -> Result<Binding> {
        if !(tau > 0.0) {
            return Err(crate::error::domain("tau", tau, "must be positive"));
        }
        let t = b.get(TIME).unwrap_or(0.0);
        Ok(b.clone().with(TIME, t).with(MATURITY, t + tau))
    }

    fn term_values(&self, b: &Binding) -> Result<(f64, Vec<f64>)> {
        let base = self.base_tape.eval(b)?;
        let terms = self
            .tapes
            .iter()
            .enumerate()
            .map(|(n, tape)| tape.eval(b).map_err(|source| Error::Term { order: n, source }))
            .collect::<Result<Vec<_>>>()?;
        Ok((base, terms))
    }

    /// Values of each correction term at a binding, unweighted.
    pub fn deltas_at(&self, b: &Binding, tau: f64) -> Result<Vec<f64>> {
        let full = self.full_binding(b, tau)?;
        Ok(self.term_values(&full)?.1)
    }

    pub fn price(&self, b: &Binding, tau: f64) -> Result<OrderedQuote> {
        let full = self.full_binding(b, tau)?;
        let (base, terms) = self.term_values(&full)?;
        let mut partial_sums = vec![base];
        let mut acc = base;
        for (n, d) in terms.iter().enumerate() {
            acc += d * term_weight(n, tau);
            partial_sums.push(acc);
        }
        Ok(OrderedQuote { partial_sums, tau, binding: full })
    }

    /// Sensitivity of the order-N price to a state variable: the analytic
    /// baseline derivative plus central differences of each correction term.
    pub fn greek(&self, b: &Binding, tau: f64, var: &str, order: u8) -> Result<f64> {
        if self.true_model.index_of(var).is_none() {
            return Err(Error::Invalid(format!("`{var}` is not a state variable of {}", self.true_model.name)));
        }
        if !(1..=2).contains(&order) {
            return Err(Error::Invalid(format!("greek order {order} is not 1 or 2")));
        }
        let full = self.full_binding(b, tau)?;
        let z = full.get(var).ok_or_else(|| Error::Invalid(format!("`{var}` is not bound")))?;
        let mut d = Differentiator::new();
        let analytic = d.diff_many(&self.baseline_price, &vec![var; order as usize]);
        let mut total = if analytic.is_zero() { 0.0 } else { Tape::compile(&analytic).eval(&full)? };
        let h = fd_step(z);
        let at = |x: f64| {
            let bb = full.clone().with(var, x);
            self.term_values(&bb).map(|(_, t)| t)
        };
        let up = at(z + h)?;
        let down = at(z - h)?;
        let mid = if order == 2 { at(z)? } else { vec![] };
        for n in 0..self.tapes.len() {
            let fd =
                if order == 1 { (up[n] - down[n]) / (2.0 * h) } else { (up[n] - 2.0 * mid[n] + down[n]) / (h * h) };
            total += fd * term_weight(n, tau);
        }
        Ok(total)
    }

    /// Minimises the squared total correction over the nuisance parameter by
    /// golden-section search on `bracket`.
    pub fn optimal_nuisance(&self, b: &Binding, tau: f64, bracket: (f64, f64), tol: f64) -> Result<NuisanceFit> {
        let objective = |eta: f64| -> f64 {
            match self.price(&b.clone().with(NUISANCE, eta), tau) {
                Ok(q) => (q.price() - q.baseline()).powi(2),
                Err(_) => f64::INFINITY,
            }
        };
        let (lo, hi) = bracket;
        if !(lo < hi) {
            return Err(Error::Invalid(format!("empty bracket ({lo}, {hi})")));
        }
        let eta = golden_section(&objective, lo, hi, tol);
        let f = objective(eta);
        if eta - lo < 2.0 * tol || hi - eta < 2.0 * tol || !f.is_finite() {
            return Err(Error::Numerical(format!(
                "no interior minimum in ({lo}, {hi}): objective {} at the lower end, {} at the upper end, {f} at {eta}",
                objective(lo),
                objective(hi),
            )));
        }
        Ok(NuisanceFit { eta, objective: f })
    }

    /// The same corrections on top of the put price.
    pub fn put_from_call_series(&self) -> Result<KmExpansion> {
        let (strike, rate) = match self.contract {
            Contract::Call { strike, rate } => (strike, rate),
            other => return Err(Error::Invalid(format!("no put counterpart for {other:?}"))),
        };
        let spot = self.baseline.baseline.state[0].clone();
        let put = bs_put_symbolic(strike, rate, &PriceVars::new(&spot));
        Ok(KmExpansion::assemble(
            self.true_model.clone(),
            self.baseline.clone(),
            put,
            self.deltas.clone(),
            self.rate_mode,
            Contract::Put { strike, rate },
        ))
    }

    fn with_contract(mut self, contract: Contract) -> Self {
        self.contract = contract;
        self
    }
}

/// Finite-difference step `(z + 1) * 10^(log10(eps)/3 - 1)`.
pub fn fd_step(z: f64) -> f64 {
    (z + 1.0) * 10f64.powf(f64::EPSILON.log10() / 3.0 - 1.0)
}

/// Golden-section minimiser on `[lo, hi]`, stopping when the bracket is
/// narrower than `tol`.
pub fn golden_section(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn call_expansion(true_model: SdeModel, strike: f64, rate: f64, order: usize) -> Result<KmExpansion> {
    let f0 = bs_call_symbolic(strike, rate, &PriceVars::default());
    let embedding = models::embed_baseline(&true_model, &models::black_scholes(rate)?)?;
    Ok(expand(&true_model, &embedding, &f0, order, RateMode::Discounted)?
        .with_contract(Contract::Call { strike, rate }))
}

/// Call under square-root variance, expanded around Black-Scholes.
pub fn heston_call(p: &models::HestonParams, strike: f64, order: usize) -> Result<KmExpansion> {
    call_expansion(models::heston(p)?, strike, p.r, order)
}

pub fn cev_call(p: &models::CevParams, strike: f64, order: usize) -> Result<KmExpansion> {
    call_expansion(models::cev(p)?, strike, p.r, order)
}

pub fn sz_call(p: &models::SzParams, strike: f64, order: usize) -> Result<KmExpansion> {
    call_expansion(models::schobel_zhu(p)?, strike, p.r, order)
}

/// Commodity futures expanded around the constant-volatility mean-reverting
/// model with the same log-price reversion.
pub fn commodity_futures(p: &models::CommodityParams, order: usize) -> Result<KmExpansion> {
    let true_model = models::commodity(p)?;
    let f0 = schwartz_futures_symbolic(p.alpha, p.eta, &PriceVars::new(models::LOG_SPOT));
    let embedding = models::embed_baseline(&true_model, &models::schwartz1(p.eta, p.alpha)?)?;
    Ok(expand(&true_model, &embedding, &f0, order, RateMode::Undiscounted)?.with_contract(Contract::Futures))
}
