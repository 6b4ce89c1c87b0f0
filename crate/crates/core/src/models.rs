//! Catalogue of diffusion models and baseline embeddings.
//!
//! Models carry drift and diffusion as expressions over named state variables,
//! with model parameters folded in as constants. The baseline volatility is
//! kept as the variable [`NUISANCE`] so a single expansion can be evaluated
//! at any choice of it.

use crate::error::{require, Error, Result};
use crate::symx::{product, sum, Expression};

pub const SPOT: &str = "S";
pub const VARIANCE: &str = "v";
pub const VOL: &str = "sigma";
pub const LOG_SPOT: &str = "X";
pub const NUISANCE: &str = "eta0";
pub const TIME: &str = "t";
pub const MATURITY: &str = "T";

#[derive(Clone, Debug)]
pub struct SdeModel {
    pub name: String,
    pub state: Vec<String>,
    pub drift: Vec<Expression>,
    /// Diffusion before correlation mixing.
    pub diffusion: Vec<Vec<Expression>>,
    pub correlation: Vec<Vec<f64>>,
    pub short_rate: Expression,
    chol: Vec<Vec<f64>>,
}

/// Lower-triangular factor of a correlation matrix, or `None` if it is not
/// positive semi-definite.
pub fn correlation_factor(r: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = r.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = r[i][i] - s;
                if d < -1e-12 {
                    return None;
                }
                l[i][j] = d.max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = (r[i][j] - s) / l[j][j];
            } else if (r[i][j] - s).abs() > 1e-12 {
                return None;
            }
        }
    }
    Some(l)
}

impl SdeModel {
    pub fn new(
        name: &str,
        state: &[&str],
        drift: Vec<Expression>,
        diffusion: Vec<Vec<Expression>>,
        correlation: Vec<Vec<f64>>,
        short_rate: f64,
    ) -> Result<SdeModel> {
        let n = state.len();
        if drift.len() != n || diffusion.len() != n || diffusion.iter().any(|row| row.len() != n) {
            return Err(Error::Invalid(format!("{name}: drift and diffusion must match {n} state variables")));
        }
        if correlation.len() != n || correlation.iter().any(|row| row.len() != n) {
            return Err(Error::Invalid(format!("{name}: correlation must be {n}x{n}")));
        }
        for i in 0..n {
            require(correlation[i][i] == 1.0, "correlation diagonal", correlation[i][i], "must be 1")?;
            for j in 0..n {
                let c = correlation[i][j];
                require(c.abs() <= 1.0, "correlation", c, "must lie in [-1, 1]")?;
                require(c == correlation[j][i], "correlation", c, "must be symmetric")?;
            }
        }
        let chol = correlation_factor(&correlation)
            .ok_or_else(|| Error::Invalid(format!("{name}: correlation is not positive semi-definite")))?;
        Ok(SdeModel {
            name: name.to_string(),
            state: state.iter().map(|s| s.to_string()).collect(),
            drift,
            diffusion,
            correlation,
            short_rate: Expression::constant(short_rate),
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Lower-triangular factor used to mix independent Brownian motions.
    pub fn correlation_factor(&self) -> &[Vec<f64>] {
        &self.chol
    }

    /// Diffusion loading on independent Brownian motions: diffusion times
    /// the correlation factor.
    pub fn mixed_diffusion(&self) -> Vec<Vec<Expression>> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        sum((0..n)
                            .map(|k| product(vec![self.diffusion[i][k].clone(), Expression::constant(self.chol[k][j])]))
                            .collect())
                    })
                    .collect()
            })
            .collect()
    }

    /// Instantaneous covariance of the state increments.
    pub fn covariance(&self) -> Vec<Vec<Expression>> {
        let m = self.mixed_diffusion();
        let n = self.dim();
        (0..n)
            .map(|i| {
                (0..n).map(|j| sum((0..n).map(|k| product(vec![m[i][k].clone(), m[j][k].clone()])).collect())).collect()
            })
            .collect()
    }

    pub fn index_of(&self, var: &str) -> Option<usize> {
        self.state.iter().position(|s| s == var)
    }
}

fn check_common(kappa: f64, theta: f64, omega: f64, rho: f64) -> Result<()> {
    require(kappa >= 0.0, "kappa", kappa, "must be non-negative")?;
    require(theta >= 0.0, "theta", theta, "must be non-negative")?;
    require(omega >= 0.0, "omega", omega, "must be non-negative")?;
    require(rho.abs() <= 1.0, "rho", rho, "must lie in [-1, 1]")
}

fn corr2(rho: f64) -> Vec<Vec<f64>> {
    vec![vec![1.0, rho], vec![rho, 1.0]]
}

fn diag(a: Expression, b: Expression) -> Vec<Vec<Expression>> {
    let z = Expression::constant(0.0);
    vec![vec![a, z.clone()], vec![z, b]]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub omega: f64,
    pub rho: f64,
    pub r: f64,
}

/// Square-root variance: dS = rS dt + sqrt(v) S dW1, dv = kappa(theta - v) dt + omega sqrt(v) dW2.
pub fn heston(p: &HestonParams) -> Result<SdeModel> {
    check_common(p.kappa, p.theta, p.omega, p.rho)?;
    let s = Expression::var(SPOT);
    let v = Expression::var(VARIANCE);
    let drift = vec![p.r * &s, p.kappa * (p.theta - &v)];
    let diffusion = diag(v.sqrt() * &s, p.omega * v.sqrt());
    SdeModel::new("heston", &[SPOT, VARIANCE], drift, diffusion, corr2(p.rho), p.r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CevParams {
    pub kappa: f64,
    pub theta: f64,
    pub omega: f64,
    pub rho: f64,
    pub r: f64,
    pub gamma: f64,
}

impl CevParams {
    pub fn heston(&self) -> HestonParams {
        HestonParams { kappa: self.kappa, theta: self.theta, omega: self.omega, rho: self.rho, r: self.r }
    }
}

/// Heston with the variance diffusion replaced by omega |v|^gamma.
pub fn cev(p: &CevParams) -> Result<SdeModel> {
    check_common(p.kappa, p.theta, p.omega, p.rho)?;
    require(p.gamma > 0.0, "gamma", p.gamma, "must be positive")?;
    let s = Expression::var(SPOT);
    let v = Expression::var(VARIANCE);
    let drift = vec![p.r * &s, p.kappa * (p.theta - &v)];
    let diffusion = diag(v.sqrt() * &s, p.omega * v.abs().powf(p.gamma));
    SdeModel::new("cev", &[SPOT, VARIANCE], drift, diffusion, corr2(p.rho), p.r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SzParams {
    pub kappa: f64,
    pub theta: f64,
    pub omega: f64,
    pub rho: f64,
    pub r: f64,
}

/// Ornstein-Uhlenbeck volatility: dS = rS dt + sigma S dW1, dsigma = kappa(theta - sigma) dt + omega dW2.
pub fn schobel_zhu(p: &SzParams) -> Result<SdeModel> {
    check_common(p.kappa, p.theta, p.omega, p.rho)?;
    let s = Expression::var(SPOT);
    let sig = Expression::var(VOL);
    let drift = vec![p.r * &s, p.kappa * (p.theta - &sig)];
    let diffusion = diag(&sig * &s, Expression::constant(p.omega));
    SdeModel::new("schobel-zhu", &[SPOT, VOL], drift, diffusion, corr2(p.rho), p.r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommodityParams {
    /// Mean-reversion speed of the log-price.
    pub eta: f64,
    /// Long-run log-price level.
    pub alpha: f64,
    pub kappa: f64,
    pub theta: f64,
    pub omega: f64,
    pub rho: f64,
}

/// Mean-reverting log-price with square-root variance:
/// dX = (eta(alpha - X) - v/2) dt + sqrt(v) dW1, dv = kappa(theta - v) dt + omega sqrt(v) dW2.
pub fn commodity(p: &CommodityParams) -> Result<SdeModel> {
    check_common(p.kappa, p.theta, p.omega, p.rho)?;
    require(p.eta > 0.0, "eta", p.eta, "must be positive")?;
    let x = Expression::var(LOG_SPOT);
    let v = Expression::var(VARIANCE);
    let drift = vec![p.eta * (p.alpha - &x) - 0.5 * &v, p.kappa * (p.theta - &v)];
    let diffusion = diag(v.sqrt(), p.omega * v.sqrt());
    SdeModel::new("commodity", &[LOG_SPOT, VARIANCE], drift, diffusion, corr2(p.rho), 0.0)
}

/// Geometric Brownian motion with volatility given by the nuisance variable.
pub fn black_scholes(r: f64) -> Result<SdeModel> {
    let s = Expression::var(SPOT);
    let vol = Expression::var(NUISANCE);
    SdeModel::new("black-scholes", &[SPOT], vec![r * &s], vec![vec![vol * &s]], vec![vec![1.0]], r)
}

/// Mean-reverting log-price with volatility given by the nuisance variable.
pub fn schwartz1(kappa: f64, alpha: f64) -> Result<SdeModel> {
    require(kappa > 0.0, "kappa", kappa, "must be positive")?;
    let x = Expression::var(LOG_SPOT);
    let vol = Expression::var(NUISANCE);
    SdeModel::new("schwartz", &[LOG_SPOT], vec![kappa * (alpha - &x)], vec![vec![vol]], vec![vec![1.0]], 0.0)
}

/// A baseline model padded to the state space of a true model.
#[derive(Clone, Debug)]
pub struct BaselineEmbedding {
    pub baseline: SdeModel,
    /// True-model state variables the baseline does not have.
    pub padding: Vec<String>,
}

pub fn embed_baseline(true_model: &SdeModel, base: &SdeModel) -> Result<BaselineEmbedding> {
    for v in &base.state {
        if true_model.index_of(v).is_none() {
            return Err(Error::Invalid(format!(
                "baseline variable `{v}` is not a state variable of {}",
                true_model.name
            )));
        }
    }
    let n = true_model.dim();
    let zero = Expression::constant(0.0);
    let src = |i: usize| base.index_of(&true_model.state[i]);
    let mut drift = vec![zero.clone(); n];
    let mut diffusion = vec![vec![zero.clone(); n]; n];
    let mut correlation = vec![vec![0.0; n]; n];
    for i in 0..n {
        correlation[i][i] = 1.0;
        if let Some(a) = src(i) {
            drift[i] = base.drift[a].clone();
            for j in 0..n {
                if let Some(b) = src(j) {
                    diffusion[i][j] = base.diffusion[a][b].clone();
                    correlation[i][j] = base.correlation[a][b];
                }
            }
        }
    }
    let padding = true_model.state.iter().filter(|v| base.index_of(v).is_none()).cloned().collect();
    let state: Vec<&str> = true_model.state.iter().map(String::as_str).collect();
    let rate = base.short_rate.as_const().unwrap_or(0.0);
    let baseline = SdeModel::new(&base.name, &state, drift, diffusion, correlation, rate)?;
    Ok(BaselineEmbedding { baseline, padding })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symx::{evaluate, Binding};

    fn fig1() -> HestonParams {
        HestonParams { kappa: 2.0, theta: 0.04, omega: 0.1, rho: -0.5, r: 0.1 }
    }

    fn at(b: &Binding, e: &Expression) -> f64 {
        evaluate(e, b).unwrap()
    }

    #[test]
    fn heston_drift_and_covariance() {
        let m = heston(&fig1()).unwrap();
        let b = Binding::from_pairs(&[("S", 90.0), ("v", 0.03)]);
        assert!((at(&b, &m.drift[0]) - 9.0).abs() < 1e-12);
        assert!((at(&b, &m.drift[1]) - 0.02).abs() < 1e-15);
        let c = m.covariance();
        assert!((at(&b, &c[0][0]) - 0.03 * 8100.0).abs() < 1e-10);
        assert!((at(&b, &c[0][1]) - (-0.5 * 0.1 * 0.03 * 90.0)).abs() < 1e-13);
        assert!((at(&b, &c[1][1]) - 0.01 * 0.03).abs() < 1e-16);
        assert!(c[0][1].ptr_eq(&c[1][0]));
    }

    #[test]
    fn heston_covariance_has_no_square_roots() {
        let c = heston(&fig1()).unwrap().covariance();
        for row in &c {
            for e in row {
                assert!(!e.to_string().contains("sqrt"), "{e}");
            }
        }
    }

    #[test]
    fn uncorrelated_off_diagonal_is_zero() {
        let m = heston(&HestonParams { rho: 0.0, ..fig1() }).unwrap();
        let c = m.covariance();
        assert!(c[0][1].is_zero() && c[1][0].is_zero());
    }

    #[test]
    fn sz_covariance() {
        let m = schobel_zhu(&SzParams { kappa: 4.0, theta: 0.2, omega: 0.1, rho: -0.5, r: 0.0953 }).unwrap();
        let c = m.covariance();
        let b = Binding::from_pairs(&[("S", 100.0), ("sigma", 0.2)]);
        assert!((at(&b, &c[0][0]) - 400.0).abs() < 1e-10);
        assert!((at(&b, &c[0][1]) + 0.5 * 0.1 * 0.2 * 100.0).abs() < 1e-13);
        assert!((at(&b, &c[1][1]) - 0.01).abs() < 1e-16);
    }

    #[test]
    fn commodity_drift() {
        let p = CommodityParams { eta: 1.0, alpha: 85f64.ln(), kappa: 1.0, theta: 0.05, omega: 0.2, rho: -0.5 };
        let m = commodity(&p).unwrap();
        let b = Binding::from_pairs(&[("X", 80f64.ln()), ("v", 0.04)]);
        let want = 85f64.ln() - 80f64.ln() - 0.02;
        assert!((at(&b, &m.drift[0]) - want).abs() < 1e-15);
    }

    #[test]
    fn cev_at_half_matches_heston() {
        let h = heston(&fig1()).unwrap().covariance();
        let c = cev(&CevParams { kappa: 2.0, theta: 0.04, omega: 0.1, rho: -0.5, r: 0.1, gamma: 0.5 })
            .unwrap()
            .covariance();
        let b = Binding::from_pairs(&[("S", 105.0), ("v", 0.07)]);
        for i in 0..2 {
            for j in 0..2 {
                let (x, y) = (at(&b, &h[i][j]), at(&b, &c[i][j]));
                assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0), "{i}{j}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let err = heston(&HestonParams { omega: -0.1, ..fig1() }).unwrap_err();
        assert!(err.to_string().contains("omega"));
        assert!(heston(&HestonParams { rho: 1.5, ..fig1() }).is_err());
        let bad = SdeModel::new(
            "x",
            &["a", "b", "c"],
            vec![Expression::constant(0.0); 3],
            vec![vec![Expression::constant(0.0); 3]; 3],
            vec![vec![1.0, 0.9, -0.9], vec![0.9, 1.0, 0.9], vec![-0.9, 0.9, 1.0]],
            0.0,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn embedding_pads_with_zeros() {
        let m = heston(&fig1()).unwrap();
        let e = embed_baseline(&m, &black_scholes(0.1).unwrap()).unwrap();
        assert_eq!(e.padding, vec!["v".to_string()]);
        assert!(e.baseline.drift[1].is_zero());
        let c = e.baseline.covariance();
        assert!(c[1][1].is_zero() && c[0][1].is_zero());
        assert!(embed_baseline(&black_scholes(0.1).unwrap(), &m).is_err());
    }
}
