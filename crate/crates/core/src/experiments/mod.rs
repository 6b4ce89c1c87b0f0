//! Reproduction runs: a grid of quotes, the reference solver, the truncation
//! orders to report and the checks the results must satisfy.

mod registry;

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;

pub use registry::{ids, lookup, point_spec, registry, MODELS};

use crate::closedform::{bs_call, bs_put, schwartz_futures};
use crate::diagnostics::percent_diff;
use crate::error::{Error, Result};
use crate::fourier::{
    heston_call_ft, heston_greeks_ft, heston_put_ft, sz_run, FtGreeks, HestonQuoteInput, QuadratureSpec, SzGridSpec,
    SzQuoteInput,
};
use crate::kmcore::{self, KmExpansion, MAX_ORDER};
use crate::mc::{self, McConfig};
use crate::models::{CevParams, CommodityParams, HestonParams, SzParams, LOG_SPOT, NUISANCE, SPOT, VARIANCE, VOL};
use crate::symx::Binding;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelSpec {
    Heston(HestonParams),
    Cev(CevParams),
    Sz(SzParams),
    Commodity(CommodityParams),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Heston(_) => "heston",
            ModelSpec::Cev(_) => "cev",
            ModelSpec::Sz(_) => "sz",
            ModelSpec::Commodity(_) => "commodity",
        }
    }

    /// Name of the second state variable: variance, or spot vol for SZ.
    pub fn level_var(&self) -> &'static str {
        match self {
            ModelSpec::Sz(_) => VOL,
            _ => VARIANCE,
        }
    }

    fn spot_var(&self) -> &'static str {
        match self {
            ModelSpec::Commodity(_) => LOG_SPOT,
            _ => SPOT,
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ModelSpec::Heston(p) => {
                vec![("kappa", p.kappa), ("theta", p.theta), ("omega", p.omega), ("rho", p.rho), ("r", p.r)]
            }
            ModelSpec::Cev(p) => vec![
                ("kappa", p.kappa),
                ("theta", p.theta),
                ("omega", p.omega),
                ("rho", p.rho),
                ("r", p.r),
                ("gamma", p.gamma),
            ],
            ModelSpec::Sz(p) => {
                vec![("kappa", p.kappa), ("theta", p.theta), ("omega", p.omega), ("rho", p.rho), ("r", p.r)]
            }
            ModelSpec::Commodity(p) => vec![
                ("eta", p.eta),
                ("alpha", p.alpha),
                ("kappa", p.kappa),
                ("theta", p.theta),
                ("omega", p.omega),
                ("rho", p.rho),
            ],
        }
    }

    fn set(&mut self, key: &str, value: f64) -> bool {
        let slot = match (self, key) {
            (ModelSpec::Heston(p), "kappa") => &mut p.kappa,
            (ModelSpec::Heston(p), "theta") => &mut p.theta,
            (ModelSpec::Heston(p), "omega") => &mut p.omega,
            (ModelSpec::Heston(p), "rho") => &mut p.rho,
            (ModelSpec::Heston(p), "r") => &mut p.r,
            (ModelSpec::Cev(p), "kappa") => &mut p.kappa,
            (ModelSpec::Cev(p), "theta") => &mut p.theta,
            (ModelSpec::Cev(p), "omega") => &mut p.omega,
            (ModelSpec::Cev(p), "rho") => &mut p.rho,
            (ModelSpec::Cev(p), "r") => &mut p.r,
            (ModelSpec::Cev(p), "gamma") => &mut p.gamma,
            (ModelSpec::Sz(p), "kappa") => &mut p.kappa,
            (ModelSpec::Sz(p), "theta") => &mut p.theta,
            (ModelSpec::Sz(p), "omega") => &mut p.omega,
            (ModelSpec::Sz(p), "rho") => &mut p.rho,
            (ModelSpec::Sz(p), "r") => &mut p.r,
            (ModelSpec::Commodity(p), "eta") => &mut p.eta,
            (ModelSpec::Commodity(p), "alpha") => &mut p.alpha,
            (ModelSpec::Commodity(p), "kappa") => &mut p.kappa,
            (ModelSpec::Commodity(p), "theta") => &mut p.theta,
            (ModelSpec::Commodity(p), "omega") => &mut p.omega,
            (ModelSpec::Commodity(p), "rho") => &mut p.rho,
            _ => return false,
        };
        *slot = value;
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Call,
    Put,
    Delta,
    Gamma,
    /// Sensitivity to the second state variable.
    Vega,
    Futures,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Quantity::Call => "call",
            Quantity::Put => "put",
            Quantity::Delta => "delta",
            Quantity::Gamma => "gamma",
            Quantity::Vega => "vega",
            Quantity::Futures => "futures",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "call" => Quantity::Call,
            "put" => Quantity::Put,
            "delta" => Quantity::Delta,
            "gamma" => Quantity::Gamma,
            "vega" => Quantity::Vega,
            "futures" => Quantity::Futures,
            _ => return Err(Error::Invalid(format!("unknown quantity `{s}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reference {
    Fourier,
    MonteCarlo(McConfig),
}

/// State variable swept along the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Spot,
    Level,
}

/// Baseline volatility.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nuisance {
    /// Square root of the spot variance, or the spot vol itself.
    Spot,
    Fixed(f64),
}

/// Second reference column computed alongside the main one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Oracle {
    /// Square-root variance transform price at the same parameters.
    HestonFourier,
}

/// How the per-order difference columns are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffKind {
    /// `(km - reference) / reference * 100`.
    Percent,
    /// `reference - km`.
    Absolute,
}

/// Machine-checkable assertions. Checks against printed values use the rows
/// of the first maturity, in grid order.
#[derive(Clone, Debug, PartialEq)]
pub enum Check {
    ReferenceMatches {
        printed: Vec<f64>,
        tol: f64,
    },
    KmMatches {
        order: usize,
        printed: Vec<f64>,
        tol: f64,
    },
    DiffMatches {
        order: usize,
        printed: Vec<f64>,
        tol: f64,
    },
    /// Rows whose printed difference is within ten tolerances must match the
    /// printed KM value; larger printed differences are compared by sign and
    /// order of magnitude only.
    UnstableDiff {
        order: usize,
        printed_km: Vec<f64>,
        printed_diff: Vec<f64>,
        tol: f64,
    },
    IntervalContainsKm {
        order: usize,
    },
    IntervalContainsOracle,
    ReferenceWithin {
        lo: f64,
        hi: f64,
    },
    MaxAbsDiffAtMost {
        order: usize,
        tau: f64,
        bound: f64,
    },
    MaxAbsDiffNonIncreasing {
        orders: Vec<usize>,
        tau: f64,
    },
    MaxAbsDiffExceeds {
        order: usize,
        other: usize,
        tau: f64,
    },
    DiffNear {
        order: usize,
        tau: f64,
        target: f64,
        tol: f64,
    },
    /// KM value negative with magnitude above `min_magnitude` at grid point
    /// `from`, and strictly growing in magnitude beyond it.
    UnstableGrowth {
        order: usize,
        from: f64,
        min_magnitude: f64,
    },
    AllRowsSolved,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub description: String,
    pub model: ModelSpec,
    pub quantity: Quantity,
    pub strike: f64,
    pub spot: f64,
    /// Spot variance, or spot vol for SZ.
    pub level: f64,
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub maturities: Vec<f64>,
    pub orders: Vec<usize>,
    pub nuisance: Nuisance,
    pub reference: Reference,
    pub oracle: Option<Oracle>,
    /// Multiplier applied to reference and KM values (100 for greeks in percent).
    pub scale: f64,
    pub diff: DiffKind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("`{key}`: `{value}` is not a number")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::Invalid(format!("`{key}`: cannot parse `{s}`"))))
        .collect()
}

impl ExperimentSpec {
    pub fn axis_name(&self) -> &'static str {
        match (self.axis, self.model) {
            (Axis::Spot, _) => "spot",
            (Axis::Level, ModelSpec::Sz(_)) => "vol",
            (Axis::Level, _) => "variance",
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.reference, Reference::MonteCarlo(_))
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "strike" => self.strike = parse_f64(key, value)?,
            "spot" => self.spot = parse_f64(key, value)?,
            "level" | "variance" | "vol" => self.level = parse_f64(key, value)?,
            "grid" => self.grid = parse_list(key, value)?,
            "tau" | "maturities" => self.maturities = parse_list(key, value)?,
            "orders" => self.orders = parse_list(key, value)?,
            "seed" => self.seed = value.trim().parse().map_err(|_| Error::Invalid(format!("`seed`: `{value}`")))?,
            "scale" => self.scale = parse_f64(key, value)?,
            "nuisance" => {
                self.nuisance =
                    if value.trim() == "spot" { Nuisance::Spot } else { Nuisance::Fixed(parse_f64(key, value)?) }
            }
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "steps" | "paths" | "confidence" => {
                let Reference::MonteCarlo(cfg) = &mut self.reference else {
                    return Err(Error::Invalid(format!("`{key}` applies to Monte Carlo experiments only")));
                };
                match key {
                    "steps" => cfg.steps = parse_f64(key, value)? as usize,
                    "paths" => cfg.paths = parse_f64(key, value)? as usize,
                    _ => cfg.confidence = parse_f64(key, value)?,
                }
            }
            _ => {
                let v = parse_f64(key, value)?;
                if !self.model.set(key, v) {
                    return Err(Error::Invalid(format!("unknown key `{key}` for a {} experiment", self.model.name())));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.maturities.is_empty() || self.orders.is_empty() {
            return Err(Error::Invalid(format!("{}: grid, maturities and orders must be non-empty", self.id)));
        }
        if let Some(&n) = self.orders.iter().find(|&&n| n > MAX_ORDER) {
            return Err(Error::Capability(format!("order {n} exceeds the maximum of {MAX_ORDER}")));
        }
        let futures = matches!(self.model, ModelSpec::Commodity(_));
        if futures != (self.quantity == Quantity::Futures) {
            return Err(Error::Capability(format!(
                "{} is not available for the {} model",
                self.quantity,
                self.model.name()
            )));
        }
        if let Reference::MonteCarlo(cfg) = &self.reference {
            cfg.validate()?;
            if !matches!(self.quantity, Quantity::Call | Quantity::Futures) {
                return Err(Error::Capability(format!("no Monte Carlo reference for {}", self.quantity)));
            }
        }
        Ok(())
    }

    fn max_order(&self) -> usize {
        *self.orders.iter().max().unwrap()
    }
}

/// One grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub tau: f64,
    pub x: f64,
    pub reference: f64,
    /// Standard error and interval bounds of a Monte Carlo reference.
    pub interval: Option<(f64, f64, f64)>,
    pub oracle: Option<f64>,
    /// KM values, one per requested order.
    pub km: Vec<f64>,
    pub diff: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub rows: Vec<Row>,
    pub checks: Vec<CheckOutcome>,
}

struct Expansions {
    full: KmExpansion,
    /// Truncations matching `spec.orders`, for greeks.
    truncated: Vec<KmExpansion>,
}

fn build_expansions(spec: &ExperimentSpec) -> Result<Expansions> {
    let n = spec.max_order();
    let mut full = match spec.model {
        ModelSpec::Heston(p) => kmcore::heston_call(&p, spec.strike, n)?,
        ModelSpec::Cev(p) => kmcore::cev_call(&p, spec.strike, n)?,
        ModelSpec::Sz(p) => kmcore::sz_call(&p, spec.strike, n)?,
        ModelSpec::Commodity(p) => kmcore::commodity_futures(&p, n)?,
    };
    if spec.quantity == Quantity::Put {
        full = full.put_from_call_series()?;
    }
    let truncated = match spec.quantity {
        Quantity::Delta | Quantity::Gamma | Quantity::Vega => spec.orders.iter().map(|&k| full.truncated(k)).collect(),
        _ => Vec::new(),
    };
    Ok(Expansions { full, truncated })
}

fn ft_greeks(spec: &ExperimentSpec, spot: f64, level: f64, tau: f64) -> Result<FtGreeks> {
    let heston = |p: &HestonParams| {
        heston_greeks_ft(
            p,
            &HestonQuoteInput { spot, strike: spec.strike, variance: level, tau },
            &QuadratureSpec::default(),
        )
    };
    match spec.model {
        ModelSpec::Heston(p) => heston(&p),
        ModelSpec::Cev(p) if p.gamma == 0.5 => heston(&p.heston()),
        ModelSpec::Sz(p) => {
            let q = SzQuoteInput { spot, strike: spec.strike, vol: level, tau };
            Ok(sz_run(&p, &q, &SzGridSpec::default())?.greeks)
        }
        _ => Err(Error::Capability(format!("no transform pricer for the {} model", spec.model.name()))),
    }
}

type RefValue = (f64, Option<(f64, f64, f64)>);

fn reference_value(spec: &ExperimentSpec, spot: f64, level: f64, tau: f64) -> Result<RefValue> {
    match spec.reference {
        Reference::Fourier => {
            let v = match (spec.quantity, spec.model) {
                (Quantity::Call, ModelSpec::Heston(p)) => heston_call_ft(
                    &p,
                    &HestonQuoteInput { spot, strike: spec.strike, variance: level, tau },
                    &QuadratureSpec::default(),
                )?,
                (Quantity::Put, ModelSpec::Heston(p)) => heston_put_ft(
                    &p,
                    &HestonQuoteInput { spot, strike: spec.strike, variance: level, tau },
                    &QuadratureSpec::default(),
                )?,
                (Quantity::Put, ModelSpec::Sz(p)) => {
                    let c = ft_greeks(spec, spot, level, tau)?.price;
                    c - spot + (-p.r * tau).exp() * spec.strike
                }
                (Quantity::Call, _) => ft_greeks(spec, spot, level, tau)?.price,
                (Quantity::Delta, _) => ft_greeks(spec, spot, level, tau)?.delta,
                (Quantity::Gamma, _) => ft_greeks(spec, spot, level, tau)?.gamma,
                (Quantity::Vega, _) => ft_greeks(spec, spot, level, tau)?.vega,
                (q, m) => return Err(Error::Capability(format!("no transform reference for {q} under {}", m.name()))),
            };
            Ok((v, None))
        }
        Reference::MonteCarlo(_) => {
            let r = mc_at(spec, spot, level, tau)?;
            Ok((r.estimate, Some((r.std_error, r.ci_lower, r.ci_upper))))
        }
    }
}

fn oracle_value(spec: &ExperimentSpec, spot: f64, level: f64, tau: f64) -> Result<f64> {
    let p = match spec.model {
        ModelSpec::Heston(p) => p,
        ModelSpec::Cev(p) => p.heston(),
        _ => return Err(Error::Capability("the square-root oracle needs a Heston or CEV model".into())),
    };
    heston_call_ft(
        &p,
        &HestonQuoteInput { spot, strike: spec.strike, variance: level, tau },
        &QuadratureSpec::default(),
    )
}

fn nuisance_value(spec: &ExperimentSpec, level: f64) -> f64 {
    match spec.nuisance {
        Nuisance::Fixed(e) => e,
        Nuisance::Spot if matches!(spec.model, ModelSpec::Sz(_)) => level,
        Nuisance::Spot => level.sqrt(),
    }
}

fn km_values(spec: &ExperimentSpec, x: &Expansions, spot: f64, level: f64, tau: f64) -> Result<Vec<f64>> {
    let eta = nuisance_value(spec, level);
    let spot_value = if matches!(spec.model, ModelSpec::Commodity(_)) { spot.ln() } else { spot };
    let b =
        Binding::from_pairs(&[(spec.model.spot_var(), spot_value), (spec.model.level_var(), level), (NUISANCE, eta)]);
    let greek = |var: &str, k: u8| x.truncated.iter().map(|t| t.greek(&b, tau, var, k)).collect::<Result<Vec<_>>>();
    match spec.quantity {
        Quantity::Call | Quantity::Put | Quantity::Futures => {
            let q = x.full.price(&b, tau)?;
            Ok(spec.orders.iter().map(|&n| q.order(n)).collect())
        }
        Quantity::Delta => greek(spec.model.spot_var(), 1),
        Quantity::Gamma => greek(spec.model.spot_var(), 2),
        Quantity::Vega => greek(spec.model.level_var(), 1),
    }
}

fn compute_row(spec: &ExperimentSpec, x: &Expansions, tau: f64, g: f64) -> Row {
    let (spot, level) = match spec.axis {
        Axis::Spot => (g, spec.level),
        Axis::Level => (spec.spot, g),
    };
    let mut row = Row {
        tau,
        x: g,
        reference: f64::NAN,
        interval: None,
        oracle: None,
        km: vec![f64::NAN; spec.orders.len()],
        diff: vec![f64::NAN; spec.orders.len()],
        error: None,
    };
    let mut attempt = || -> Result<()> {
        let (r, interval) = reference_value(spec, spot, level, tau)?;
        row.reference = r * spec.scale;
        row.interval = interval.map(|(se, lo, hi)| (se * spec.scale, lo * spec.scale, hi * spec.scale));
        if spec.oracle.is_some() {
            row.oracle = Some(oracle_value(spec, spot, level, tau)? * spec.scale);
        }
        row.km = km_values(spec, x, spot, level, tau)?.into_iter().map(|v| v * spec.scale).collect();
        row.diff = row
            .km
            .iter()
            .map(|&k| match spec.diff {
                DiffKind::Percent => percent_diff(k, row.reference),
                DiffKind::Absolute => Ok(row.reference - k),
            })
            .collect::<Result<_>>()?;
        Ok(())
    };
    if let Err(e) = attempt() {
        row.error = Some(e.to_string());
    }
    row
}

/// Runs every grid point and evaluates the registered checks.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let x = build_expansions(spec)?;
    let points: Vec<(f64, f64)> =
        spec.maturities.iter().flat_map(|&t| spec.grid.iter().map(move |&g| (t, g))).collect();
    let rows: Vec<Row> = points.par_iter().map(|&(t, g)| compute_row(spec, &x, t, g)).collect();
    let checks = spec.checks.iter().map(|c| evaluate_check(spec, &rows, c)).collect();
    Ok(ExperimentOutput { spec: spec.clone(), rows, checks })
}

/// The expansion behind a spec, up to its highest order.
pub fn series(spec: &ExperimentSpec) -> Result<KmExpansion> {
    spec.validate()?;
    Ok(build_expansions(spec)?.full)
}

/// KM values at the spec's spot, level and first maturity, one per order.
pub fn km_point(spec: &ExperimentSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let x = build_expansions(spec)?;
    let v = km_values(spec, &x, spec.spot, spec.level, spec.maturities[0])?;
    Ok(v.into_iter().map(|v| v * spec.scale).collect())
}

/// Reference value at the spec's spot, level and first maturity, with the
/// standard error and interval of a Monte Carlo reference.
pub fn reference_point(spec: &ExperimentSpec) -> Result<(f64, Option<(f64, f64, f64)>)> {
    spec.validate()?;
    let (v, interval) = reference_value(spec, spec.spot, spec.level, spec.maturities[0])?;
    Ok((v * spec.scale, interval.map(|(se, lo, hi)| (se * spec.scale, lo * spec.scale, hi * spec.scale))))
}

/// Full Monte Carlo result at the spec's point; the configuration comes from
/// a Monte Carlo reference when the spec has one.
pub fn mc_point(spec: &ExperimentSpec) -> Result<mc::McResult> {
    mc_at(spec, spec.spot, spec.level, spec.maturities[0])
}

fn mc_at(spec: &ExperimentSpec, spot: f64, level: f64, tau: f64) -> Result<mc::McResult> {
    let cfg = match spec.reference {
        Reference::MonteCarlo(cfg) => McConfig { seed: spec.seed, ..cfg },
        Reference::Fourier => McConfig::option_default(spec.seed),
    };
    match (spec.model, spec.quantity) {
        (ModelSpec::Cev(p), Quantity::Call) => mc::simulate_cev_call(&p, spot, level, spec.strike, tau, &cfg),
        (ModelSpec::Heston(p), Quantity::Call) => mc::simulate_cev_call(
            &CevParams { kappa: p.kappa, theta: p.theta, omega: p.omega, rho: p.rho, r: p.r, gamma: 0.5 },
            spot,
            level,
            spec.strike,
            tau,
            &cfg,
        ),
        (ModelSpec::Sz(p), Quantity::Call) => mc::simulate_sz_call(&p, spot, level, spec.strike, tau, &cfg),
        (ModelSpec::Commodity(p), Quantity::Futures) => mc::simulate_commodity_futures(&p, spot.ln(), level, tau, &cfg),
        (m, q) => Err(Error::Capability(format!("no Monte Carlo estimator for {q} under {}", m.name()))),
    }
}

/// Baseline closed-form value at the spec's point: Black-Scholes with the
/// nuisance volatility, or the constant-volatility futures price.
pub fn closed_point(spec: &ExperimentSpec) -> Result<f64> {
    spec.validate()?;
    let (spot, tau) = (spec.spot, spec.maturities[0]);
    let eta = nuisance_value(spec, spec.level);
    let r = match spec.model {
        ModelSpec::Heston(p) => p.r,
        ModelSpec::Cev(p) => p.r,
        ModelSpec::Sz(p) => p.r,
        ModelSpec::Commodity(p) => {
            return Ok(schwartz_futures(spot.ln(), p.alpha, p.eta, eta, tau)?.futures * spec.scale);
        }
    };
    let v = match spec.quantity {
        Quantity::Call => bs_call(spot, spec.strike, r, eta, tau)?.price,
        Quantity::Put => bs_put(spot, spec.strike, r, eta, tau)?.price,
        Quantity::Delta => bs_call(spot, spec.strike, r, eta, tau)?.delta,
        Quantity::Gamma => bs_call(spot, spec.strike, r, eta, tau)?.gamma,
        // The baseline price does not depend on the spot variance.
        Quantity::Vega => 0.0,
        Quantity::Futures => unreachable!("validated against the model"),
    };
    Ok(v * spec.scale)
}

fn order_index(spec: &ExperimentSpec, order: usize) -> Option<usize> {
    spec.orders.iter().position(|&n| n == order)
}

fn rows_at<'a>(rows: &'a [Row], tau: f64) -> Vec<&'a Row> {
    rows.iter().filter(|r| (r.tau - tau).abs() < 1e-12).collect()
}

fn max_abs_diff(rows: &[&Row], k: usize) -> f64 {
    rows.iter().map(|r| r.diff[k].abs()).fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

fn outcome(description: String, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { description, passed, detail }
}

/// Compares one column with printed values and reports the worst row.
fn compare_printed(
    description: String,
    rows: &[&Row],
    printed: &[f64],
    tol: f64,
    column: &dyn Fn(&Row) -> f64,
) -> CheckOutcome {
    if rows.len() != printed.len() {
        return outcome(description, false, format!("{} rows against {} printed values", rows.len(), printed.len()));
    }
    let mut worst = (0.0f64, 0usize);
    let mut passed = true;
    for (i, (r, p)) in rows.iter().zip(printed).enumerate() {
        let d = (column(r) - p).abs();
        if !(d <= tol) {
            passed = false;
        }
        if !(d <= worst.0) {
            worst = (d, i);
        }
    }
    let r = rows[worst.1];
    let detail = format!("worst at {}: {} vs printed {} (|d| = {:e})", r.x, column(r), printed[worst.1], worst.0);
    outcome(description, passed, detail)
}

fn evaluate_check(spec: &ExperimentSpec, rows: &[Row], check: &Check) -> CheckOutcome {
    let first = rows_at(rows, spec.maturities[0]);
    let missing = |order: usize| outcome(format!("order {order}"), false, format!("order {order} was not computed"));
    match check {
        Check::ReferenceMatches { printed, tol } => {
            compare_printed(format!("reference within {tol} of printed"), &first, printed, *tol, &|r| r.reference)
        }
        Check::KmMatches { order, printed, tol } => match order_index(spec, *order) {
            Some(k) => {
                compare_printed(format!("KM order {order} within {tol} of printed"), &first, printed, *tol, &|r| {
                    r.km[k]
                })
            }
            None => missing(*order),
        },
        Check::DiffMatches { order, printed, tol } => match order_index(spec, *order) {
            Some(k) => compare_printed(
                format!("order {order} difference within {tol} of printed"),
                &first,
                printed,
                *tol,
                &|r| r.diff[k],
            ),
            None => missing(*order),
        },
        Check::UnstableDiff { order, printed_km, printed_diff, tol } => {
            let Some(k) = order_index(spec, *order) else { return missing(*order) };
            let description = format!("order {order}: stable rows within {tol}, unstable rows by sign and magnitude");
            if first.len() != printed_km.len() || first.len() != printed_diff.len() {
                return outcome(description, false, "row count differs from the printed table".into());
            }
            let mut bad = Vec::new();
            for ((r, &pk), &pd) in first.iter().zip(printed_km).zip(printed_diff) {
                let ok = if pd.abs() <= 10.0 * tol {
                    (r.km[k] - pk).abs() <= *tol
                } else {
                    let ratio = r.diff[k] / pd;
                    ratio > 0.1 && ratio < 10.0
                };
                if !ok {
                    bad.push(format!("{}: km {} diff {} (printed {pk}, {pd})", r.x, r.km[k], r.diff[k]));
                }
            }
            let detail = if bad.is_empty() { "all rows agree".into() } else { bad.join("; ") };
            outcome(description, bad.is_empty(), detail)
        }
        Check::IntervalContainsKm { order } => {
            let Some(k) = order_index(spec, *order) else { return missing(*order) };
            let outside: Vec<String> = rows
                .iter()
                .filter(|r| !matches!(r.interval, Some((_, lo, hi)) if lo <= r.km[k] && r.km[k] <= hi))
                .map(|r| format!("{} (tau {})", r.x, r.tau))
                .collect();
            let detail = if outside.is_empty() {
                "inside at every row".into()
            } else {
                format!("outside at {}", outside.join(", "))
            };
            outcome(format!("confidence interval contains KM order {order}"), outside.is_empty(), detail)
        }
        Check::IntervalContainsOracle => {
            let outside: Vec<String> = rows
                .iter()
                .filter(|r| !matches!((r.interval, r.oracle), (Some((_, lo, hi)), Some(o)) if lo <= o && o <= hi))
                .map(|r| format!("{}", r.x))
                .collect();
            let detail = if outside.is_empty() {
                "inside at every row".into()
            } else {
                format!("outside at {}", outside.join(", "))
            };
            outcome("confidence interval contains the transform price".into(), outside.is_empty(), detail)
        }
        Check::ReferenceWithin { lo, hi } => {
            let bad: Vec<String> = rows
                .iter()
                .filter(|r| !(*lo <= r.reference && r.reference <= *hi))
                .map(|r| format!("{}", r.reference))
                .collect();
            let detail = if bad.is_empty() {
                format!("{:?}", rows.iter().map(|r| r.reference).collect::<Vec<_>>())
            } else {
                format!("outside: {}", bad.join(", "))
            };
            outcome(format!("reference in [{lo}, {hi}]"), bad.is_empty(), detail)
        }
        Check::MaxAbsDiffAtMost { order, tau, bound } => {
            let Some(k) = order_index(spec, *order) else { return missing(*order) };
            let m = max_abs_diff(&rows_at(rows, *tau), k);
            outcome(
                format!("max |diff| of order {order} at tau {tau} <= {bound}"),
                m <= *bound,
                format!("max |diff| = {m}"),
            )
        }
        Check::MaxAbsDiffNonIncreasing { orders, tau } => {
            let at = rows_at(rows, *tau);
            let mut maxima = Vec::new();
            for &n in orders {
                let Some(k) = order_index(spec, n) else { return missing(n) };
                maxima.push(max_abs_diff(&at, k));
            }
            let ok = maxima.windows(2).all(|w| w[1] <= w[0]);
            outcome(format!("max |diff| non-increasing over orders {orders:?} at tau {tau}"), ok, format!("{maxima:?}"))
        }
        Check::MaxAbsDiffExceeds { order, other, tau } => {
            let (Some(a), Some(b)) = (order_index(spec, *order), order_index(spec, *other)) else {
                return missing(*order.max(other));
            };
            let at = rows_at(rows, *tau);
            let (ma, mb) = (max_abs_diff(&at, a), max_abs_diff(&at, b));
            outcome(
                format!("max |diff| of order {order} exceeds order {other} at tau {tau}"),
                ma > mb,
                format!("order {order}: {ma}, order {other}: {mb}"),
            )
        }
        Check::DiffNear { order, tau, target, tol } => {
            let Some(k) = order_index(spec, *order) else { return missing(*order) };
            let at = rows_at(rows, *tau);
            let vals: Vec<f64> = at.iter().map(|r| r.diff[k]).collect();
            let ok = !vals.is_empty() && vals.iter().all(|v| (v - target).abs() <= *tol);
            outcome(format!("order {order} difference at tau {tau} within {tol} of {target}"), ok, format!("{vals:?}"))
        }
        Check::UnstableGrowth { order, from, min_magnitude } => {
            let Some(k) = order_index(spec, *order) else { return missing(*order) };
            let tail: Vec<&Row> = first.iter().copied().filter(|r| r.x >= *from - 1e-12).collect();
            let vals: Vec<f64> = tail.iter().map(|r| r.km[k]).collect();
            let ok = vals.first().is_some_and(|&v| v < 0.0 && v.abs() > *min_magnitude)
                && vals.windows(2).all(|w| w[1].abs() > w[0].abs());
            outcome(
                format!("order {order} negative beyond -{min_magnitude} at {from}, magnitude growing"),
                ok,
                format!("{vals:?}"),
            )
        }
        Check::AllRowsSolved => {
            let failed: Vec<String> =
                rows.iter().filter_map(|r| r.error.as_ref().map(|e| format!("{} (tau {}): {e}", r.x, r.tau))).collect();
            let detail = if failed.is_empty() { format!("{} rows", rows.len()) } else { failed.join("; ") };
            outcome("every grid point solved".into(), failed.is_empty(), detail)
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

impl ExperimentOutput {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// All checks pass and no grid point failed.
    pub fn passed(&self) -> bool {
        self.failed_rows() == 0 && self.checks.iter().all(|c| c.passed)
    }

    pub fn header(&self, timestamp: Option<u64>) -> Vec<String> {
        let s = &self.spec;
        let params = s.model.params().iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
        let nuisance = match s.nuisance {
            Nuisance::Spot => "spot".to_string(),
            Nuisance::Fixed(e) => num(e),
        };
        let reference = match s.reference {
            Reference::Fourier => "fourier".to_string(),
            Reference::MonteCarlo(c) => format!(
                "monte-carlo steps={} paths={} scheme={:?} boundary={:?} confidence={}",
                c.steps, c.paths, c.scheme, c.boundary, c.confidence
            ),
        };
        let mut h = vec![
            format!("experiment={}", s.id),
            format!("description={}", s.description),
            format!("version={}", env!("CARGO_PKG_VERSION")),
            format!("seed={}", s.seed),
            format!("model={} {params}", s.model.name()),
            format!(
                "quantity={} strike={} spot={} level={} nuisance={nuisance} scale={}",
                s.quantity, s.strike, s.spot, s.level, s.scale
            ),
            format!("reference={reference}"),
            format!(
                "diff={}",
                match s.diff {
                    DiffKind::Percent => "percent (km - reference) / reference * 100",
                    DiffKind::Absolute => "absolute reference - km",
                }
            ),
        ];
        h.extend(s.notes.iter().map(|n| format!("note={n}")));
        if let Some(t) = timestamp {
            h.push(format!("generated_unix={t}"));
        }
        h
    }

    pub fn columns(&self) -> Vec<String> {
        let s = &self.spec;
        let mut c = vec!["tau".to_string(), s.axis_name().to_string(), "reference".to_string()];
        if s.is_monte_carlo() {
            c.extend(["std_error", "ci_lower", "ci_upper"].map(String::from));
        }
        if s.oracle.is_some() {
            c.push("oracle".into());
        }
        c.extend(s.orders.iter().map(|n| format!("km_{n}")));
        c.extend(s.orders.iter().map(|n| format!("diff_{n}")));
        c.push("status".into());
        c
    }

    /// CSV with a `#` metadata header; pass a timestamp to record the run time.
    pub fn to_csv(&self, timestamp: Option<u64>) -> Result<String> {
        let mut out = String::new();
        for line in self.header(timestamp) {
            out.push_str("# ");
            out.push_str(&line);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        w.write_record(self.columns()).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![num(r.tau), num(r.x), num(r.reference)];
            if self.spec.is_monte_carlo() {
                let (se, lo, hi) = r.interval.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
                rec.extend([num(se), num(lo), num(hi)]);
            }
            if self.spec.oracle.is_some() {
                rec.push(num(r.oracle.unwrap_or(f64::NAN)));
            }
            rec.extend(r.km.iter().map(|&v| num(v)));
            rec.extend(r.diff.iter().map(|&v| num(v)));
            rec.push(r.error.clone().unwrap_or_else(|| "ok".into()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))?);
        Ok(out)
    }

    /// One line per check plus a verdict.
    pub fn summary(&self) -> String {
        let mut s = format!("{}: {} rows, {} failed\n", self.spec.id, self.rows.len(), self.failed_rows());
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            s.push_str(&format!("  {tag} {} [{}]\n", c.description, c.detail));
        }
        s.push_str(if self.passed() { "result: PASS\n" } else { "result: FAIL\n" });
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentSpec {
        let mut s = lookup("fig-heston-convergence").unwrap();
        s.grid = vec![90.0, 100.0, 110.0];
        s.orders = vec![0, 1, 2];
        s.checks = vec![Check::AllRowsSolved];
        s
    }

    #[test]
    fn rows_follow_grid_order() {
        let out = run(&small()).unwrap();
        let xs: Vec<f64> = out.rows.iter().map(|r| r.x).collect();
        assert_eq!(xs, vec![90.0, 100.0, 110.0]);
        assert!(out.passed());
    }

    #[test]
    fn csv_is_reproducible_and_headed() {
        let spec = small();
        let a = run(&spec).unwrap().to_csv(None).unwrap();
        let b = run(&spec).unwrap().to_csv(None).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("# experiment=fig-heston-convergence\n"));
        let header = a.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header, "tau,spot,reference,km_0,km_1,km_2,diff_0,diff_1,diff_2,status");
        let stamped = run(&spec).unwrap().to_csv(Some(7)).unwrap();
        assert!(stamped.contains("# generated_unix=7\n"));
    }

    #[test]
    fn overrides() {
        let mut s = small();
        s.set("kappa", "3.5").unwrap();
        s.set("orders", "0,3").unwrap();
        s.set("nuisance", "0.25").unwrap();
        assert_eq!(s.model.params()[0], ("kappa", 3.5));
        assert_eq!(s.orders, vec![0, 3]);
        assert_eq!(s.nuisance, Nuisance::Fixed(0.25));
        assert!(s.set("gamma", "0.6").is_err());
        assert!(s.set("paths", "10").is_err());
        assert!(s.set("kappa", "fast").is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small();
        s.grid.clear();
        assert!(run(&s).is_err());
        let mut s = small();
        s.orders = vec![MAX_ORDER + 1];
        assert!(matches!(run(&s), Err(Error::Capability(_))));
        let mut s = small();
        s.quantity = Quantity::Futures;
        assert!(run(&s).is_err());
    }

    #[test]
    fn failing_rows_are_marked() {
        let mut s = small();
        s.grid = vec![100.0, -5.0];
        let out = run(&s).unwrap();
        assert!(out.rows[0].error.is_none());
        assert!(out.rows[1].error.is_some());
        assert!(!out.passed());
        assert!(out.to_csv(None).unwrap().lines().last().unwrap().contains("out of domain"));
    }
}
