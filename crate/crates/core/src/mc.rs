//! Monte Carlo reference prices.
//!
//! Every path draws from its own ChaCha8 stream keyed by `(seed, path index)`,
//! and payoffs are reduced in path order, so results are bit-identical for a
//! given configuration no matter how paths are scheduled across threads.
//! Normals come from the ziggurat sampler of `rand_distr`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{require, Error, Result};
use crate::models::{CevParams, CommodityParams, SzParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Negative variance is replaced by its absolute value.
    Reflective,
    /// Negative variance is replaced by zero.
    Absorbing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Milstein for the price and the variance (log price stays Euler).
    Milstein,
    /// Plain Euler for every factor.
    Euler,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub boundary: Boundary,
    pub confidence: f64,
}

impl McConfig {
    pub fn new(steps: usize, paths: usize, seed: u64) -> Self {
        McConfig { steps, paths, seed, scheme: Scheme::Milstein, boundary: Boundary::Reflective, confidence: 0.95 }
    }

    /// 500 steps, 20,000 paths.
    pub fn option_default(seed: u64) -> Self {
        Self::new(500, 20_000, seed)
    }

    /// 1,000 steps, 200,000 paths.
    pub fn futures_default(seed: u64) -> Self {
        Self::new(1_000, 200_000, seed)
    }

    /// 1,000 steps, 50,000 paths.
    pub fn futures_reduced(seed: u64) -> Self {
        Self::new(1_000, 50_000, seed)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.steps >= 1, "steps", self.steps as f64, "must be at least 1")?;
        require(self.paths >= 2, "paths", self.paths as f64, "must be at least 2")?;
        require(self.confidence > 0.0 && self.confidence < 1.0, "confidence", self.confidence, "must lie in (0, 1)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McResult {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Steps at which the simulated variance came out negative.
    pub negative_variance_events: u64,
    pub total_steps: u64,
    pub config: McConfig,
}

impl McResult {
    pub fn contains(&self, x: f64) -> bool {
        self.ci_lower <= x && x <= self.ci_upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_upper - self.ci_lower)
    }
}

/// Two-sided normal quantile for a confidence level.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + 0.5 * level)
}

/// `mean -/+ z * std / sqrt(n)`.
pub fn confidence_interval(mean: f64, std: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    require(n >= 2, "paths", n as f64, "must be at least 2")?;
    require(level > 0.0 && level < 1.0, "confidence", level, "must lie in (0, 1)")?;
    let h = normal_quantile(level) * std / (n as f64).sqrt();
    Ok((mean - h, mean + h))
}

/// Failure inside one path.
struct PathError {
    step: usize,
}

struct PathOutcome {
    value: f64,
    negatives: u64,
}

fn rng_for(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn correlated(rng: &mut ChaCha8Rng, rho: f64, rho_c: f64) -> (f64, f64) {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    (a, rho * a + rho_c * b)
}

fn run<F>(cfg: &McConfig, discount: f64, path: F) -> Result<McResult>
where
    F: Fn(&mut ChaCha8Rng) -> std::result::Result<PathOutcome, PathError> + Sync,
{
    cfg.validate()?;
    let outcomes: Vec<std::result::Result<PathOutcome, (usize, PathError)>> =
        (0..cfg.paths).into_par_iter().map(|i| path(&mut rng_for(cfg.seed, i)).map_err(|e| (i, e))).collect();
    let mut values = Vec::with_capacity(cfg.paths);
    let mut negatives = 0;
    for o in outcomes {
        match o {
            Ok(p) => {
                values.push(p.value);
                negatives += p.negatives;
            }
            Err((i, e)) => {
                return Err(Error::Numerical(format!("path {i} left the finite range at step {}", e.step)));
            }
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.max(0.0).sqrt();
    let estimate = discount * mean;
    let (lo, hi) = confidence_interval(estimate, discount * std, values.len(), cfg.confidence)?;
    Ok(McResult {
        estimate,
        std_error: discount * std / n.sqrt(),
        ci_lower: lo,
        ci_upper: hi,
        negative_variance_events: negatives,
        total_steps: (cfg.steps * cfg.paths) as u64,
        config: *cfg,
    })
}

fn clip(v: f64, boundary: Boundary) -> f64 {
    match boundary {
        Boundary::Reflective => v.abs(),
        Boundary::Absorbing => v.max(0.0),
    }
}

fn check_rho(rho: f64) -> Result<f64> {
    require((-1.0..=1.0).contains(&rho), "rho", rho, "must lie in [-1, 1]")?;
    Ok((1.0 - rho * rho).sqrt())
}

/// European call under CEV variance, `dv = kappa(theta - v) dt + omega |v|^gamma dW`.
pub fn simulate_cev_call(
    p: &CevParams,
    spot: f64,
    variance: f64,
    strike: f64,
    tau: f64,
    cfg: &McConfig,
) -> Result<McResult> {
    require(p.gamma > 0.0, "gamma", p.gamma, "must be positive")?;
    require(spot > 0.0, "S", spot, "must be positive")?;
    require(tau > 0.0, "tau", tau, "must be positive")?;
    let rho_c = check_rho(p.rho)?;
    let dt = tau / cfg.steps as f64;
    let sdt = dt.sqrt();
    let milstein = cfg.scheme == Scheme::Milstein;
    let (k, th, w, g) = (p.kappa, p.theta, p.omega, p.gamma);
    let path = |rng: &mut ChaCha8Rng| {
        let (mut s, mut v) = (spot, variance);
        let mut negatives = 0;
        for i in 0..cfg.steps {
            let (z1, z2) = correlated(rng, p.rho, rho_c);
            let va = clip(v, cfg.boundary);
            let mut ds = p.r * dt + va.sqrt() * sdt * z1;
            let mut dv = k * (th - va) * dt + w * va.powf(g) * sdt * z2;
            if milstein {
                ds += 0.5 * va * (z1 * z1 - 1.0) * dt;
                if va > 0.0 {
                    dv += 0.5 * w * w * g * va.powf(2.0 * g - 1.0) * (z2 * z2 - 1.0) * dt;
                }
            }
            s *= 1.0 + ds;
            v += dv;
            if v < 0.0 {
                negatives += 1;
            }
            if !(s.is_finite() && v.is_finite()) {
                return Err(PathError { step: i });
            }
        }
        Ok(PathOutcome { value: (s - strike).max(0.0), negatives })
    };
    run(cfg, (-p.r * tau).exp(), path)
}

/// European call under Ornstein-Uhlenbeck volatility. The volatility is
/// Gaussian and may change sign; no boundary rule applies to it.
pub fn simulate_sz_call(p: &SzParams, spot: f64, vol: f64, strike: f64, tau: f64, cfg: &McConfig) -> Result<McResult> {
    require(spot > 0.0, "S", spot, "must be positive")?;
    require(tau > 0.0, "tau", tau, "must be positive")?;
    let rho_c = check_rho(p.rho)?;
    let dt = tau / cfg.steps as f64;
    let sdt = dt.sqrt();
    let milstein = cfg.scheme == Scheme::Milstein;
    let path = |rng: &mut ChaCha8Rng| {
        let (mut s, mut sig) = (spot, vol);
        for i in 0..cfg.steps {
            let (z1, z2) = correlated(rng, p.rho, rho_c);
            let mut ds = p.r * dt + sig * sdt * z1;
            if milstein {
                ds += 0.5 * sig * sig * (z1 * z1 - 1.0) * dt;
            }
            s *= 1.0 + ds;
            sig += p.kappa * (p.theta - sig) * dt + p.omega * sdt * z2;
            if !s.is_finite() {
                return Err(PathError { step: i });
            }
        }
        Ok(PathOutcome { value: (s - strike).max(0.0), negatives: 0 })
    };
    run(cfg, (-p.r * tau).exp(), path)
}

/// Futures price `E[exp X(T)]` under mean-reverting log price with
/// square-root variance. Not discounted.
pub fn simulate_commodity_futures(
    p: &CommodityParams,
    log_spot: f64,
    variance: f64,
    tau: f64,
    cfg: &McConfig,
) -> Result<McResult> {
    require(tau > 0.0, "tau", tau, "must be positive")?;
    let rho_c = check_rho(p.rho)?;
    let dt = tau / cfg.steps as f64;
    let milstein = cfg.scheme == Scheme::Milstein;
    let path = |rng: &mut ChaCha8Rng| {
        let (mut x, mut v) = (log_spot, variance);
        let mut negatives = 0;
        for i in 0..cfg.steps {
            let (z1, z2) = correlated(rng, p.rho, rho_c);
            let va = clip(v, cfg.boundary);
            x += (p.eta * (p.alpha - x) - 0.5 * va) * dt + (va * dt).sqrt() * z1;
            v = va + p.kappa * (p.theta - va) * dt + p.omega * (va * dt).sqrt() * z2;
            if milstein {
                v += 0.25 * p.omega * p.omega * (z2 * z2 - 1.0) * dt;
            }
            if v < 0.0 {
                negatives += 1;
            }
            if !(x.is_finite() && v.is_finite()) {
                return Err(PathError { step: i });
            }
        }
        Ok(PathOutcome { value: x.exp(), negatives })
    };
    run(cfg, 1.0, path)
}

/// One Euler path of the CEV variance on `steps + 1` equally spaced dates,
/// reflected at zero.
pub fn variance_path(p: &CevParams, variance: f64, horizon: f64, steps: usize, seed: u64) -> Result<Vec<f64>> {
    require(steps >= 1, "steps", steps as f64, "must be at least 1")?;
    require(horizon > 0.0, "horizon", horizon, "must be positive")?;
    let dt = horizon / steps as f64;
    let mut rng = rng_for(seed, 0);
    let mut v = variance;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(v);
    for _ in 0..steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        v = (v + p.kappa * (p.theta - v) * dt + p.omega * v.abs().powf(p.gamma) * dt.sqrt() * z).abs();
        out.push(v);
    }
    Ok(out)
}
