//! Structural-causal-model simulator for two-session sequential
//! experiments with configurable main effects, carry-over, mediation,
//! unobserved confounding, and positivity regimes.
//!
//! Structural equations, per unit:
//!
//!   U   ~ N(0, 1)                     (if a confounder is configured)
//!   A0  ~ Bernoulli(p0)
//!   L1* = alpha_l*A0 + lambda_l*U + noise_l*eps_L
//!   L1  = 1{L1* > median(L1*)}        (categorical-binary), else L1*
//!   A1  ~ Bernoulli(assignment1(L1, A0))
//!   Y   = delta*A1 + eta*A0 + gamma*L1 + lambda_y*U + noise_y*eps_Y
//!
//! The assignment draws never see U, so sequential conditional
//! exchangeability holds by construction in every generated dataset.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{Dataset, EstimandSpec, OutcomeValue, Support, Unit};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Second-session assignment mechanism P(A1 = 1 | L1, A0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assignment1 {
    Constant { p: f64 },
    /// Entries keyed by (categorical L1 level, a0).
    Table { entries: Vec<AssignmentEntry> },
    /// expit(intercept + coef_l * l1 + coef_a0 * a0)
    Logistic { intercept: f64, coef_l: f64, coef_a0: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub l1: usize,
    pub a0: u8,
    pub p: f64,
}

impl Default for Assignment1 {
    fn default() -> Self {
        Assignment1::Constant { p: 0.5 }
    }
}

impl Assignment1 {
    fn prob(&self, l1: &OutcomeValue, a0: u8) -> Result<f64> {
        match self {
            Assignment1::Constant { p } => Ok(*p),
            Assignment1::Table { entries } => {
                let level = l1.as_level().ok_or_else(|| {
                    Error::InvalidConfig("assignment1 table requires categorical L1".into())
                })?;
                entries
                    .iter()
                    .find(|e| e.l1 == level && e.a0 == a0)
                    .map(|e| e.p)
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "assignment1 table missing entry (l1={level}, a0={a0})"
                        ))
                    })
            }
            Assignment1::Logistic { intercept, coef_l, coef_a0 } => {
                let z = intercept + coef_l * l1.as_numeric() + coef_a0 * a0 as f64;
                Ok(1.0 / (1.0 + (-z).exp()))
            }
        }
    }

    fn entries_in_unit_interval(&self) -> bool {
        match self {
            Assignment1::Constant { p } => (0.0..=1.0).contains(p),
            Assignment1::Table { entries } => entries.iter().all(|e| (0.0..=1.0).contains(&e.p)),
            Assignment1::Logistic { .. } => true,
        }
    }

    fn has_degenerate_entry(&self) -> bool {
        match self {
            Assignment1::Constant { p } => *p == 0.0 || *p == 1.0,
            Assignment1::Table { entries } => entries.iter().any(|e| e.p == 0.0 || e.p == 1.0),
            Assignment1::Logistic { .. } => false,
        }
    }
}

/// Unobserved confounder arrows U -> L1 and U -> Y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfounderConfig {
    pub lambda_l: f64,
    pub lambda_y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LKind {
    CategoricalBinary,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    /// Main effect of A1 on Y.
    pub delta: f64,
    /// Carry-over effect of A0 on Y.
    pub eta: f64,
    /// Effect of L1 on Y.
    #[serde(default)]
    pub gamma: f64,
    /// Effect of A0 on L1.
    #[serde(default)]
    pub alpha_l: f64,
    /// P(A0 = 1).
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default)]
    pub assignment1: Assignment1,
    #[serde(default)]
    pub noise_l: f64,
    #[serde(default)]
    pub noise_y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confounder: Option<ConfounderConfig>,
    #[serde(default = "default_l_kind")]
    pub l_kind: LKind,
    pub seed: u64,
}

fn default_p0() -> f64 {
    0.5
}

fn default_l_kind() -> LKind {
    LKind::CategoricalBinary
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            delta: 0.0,
            eta: 0.0,
            gamma: 0.0,
            alpha_l: 0.0,
            p0: 0.5,
            assignment1: Assignment1::default(),
            noise_l: 0.0,
            noise_y: 0.0,
            confounder: None,
            l_kind: LKind::CategoricalBinary,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::InvalidConfig(format!("p0 must be in [0, 1], got {}", self.p0)));
        }
        if !self.assignment1.entries_in_unit_interval() {
            return Err(Error::InvalidConfig("assignment1 entries must be in [0, 1]".into()));
        }
        if self.noise_l < 0.0 || self.noise_y < 0.0 {
            return Err(Error::InvalidConfig("noise_l and noise_y must be >= 0".into()));
        }
        if matches!(self.l_kind, LKind::Continuous)
            && matches!(self.assignment1, Assignment1::Table { .. })
        {
            return Err(Error::InvalidConfig(
                "assignment1 table requires categorical-binary l_kind".into(),
            ));
        }
        Ok(())
    }

    /// True iff the configured assignment mechanism is degenerate
    /// somewhere (positivity cannot hold in the generated data).
    pub fn positivity_violated(&self) -> bool {
        self.p0 == 0.0 || self.p0 == 1.0 || self.assignment1.has_degenerate_entry()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: DgpConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn lambda_l(&self) -> f64 {
        self.confounder.map(|c| c.lambda_l).unwrap_or(0.0)
    }

    fn lambda_y(&self) -> f64 {
        self.confounder.map(|c| c.lambda_y).unwrap_or(0.0)
    }

    /// Standard deviation of L1* given A0.
    fn sigma_l(&self) -> f64 {
        (self.lambda_l().powi(2) + self.noise_l.powi(2)).sqrt()
    }

    /// Population median of L1* = alpha_l*A0 + lambda_l*U + noise_l*eps,
    /// a two-component Gaussian mixture. Used as the binarization
    /// threshold for categorical L1.
    pub fn l_threshold(&self) -> f64 {
        let sigma = self.sigma_l();
        if sigma == 0.0 {
            // point masses at 0 and alpha_l; the midpoint separates the
            // two atoms (and degenerates to 0 when alpha_l = 0)
            return self.alpha_l / 2.0;
        }
        let normal = Normal::new(0.0, 1.0).unwrap();
        let cdf = |x: f64| {
            (1.0 - self.p0) * normal.cdf(x / sigma) + self.p0 * normal.cdf((x - self.alpha_l) / sigma)
        };
        let spread = 10.0 * sigma + self.alpha_l.abs();
        let (mut lo, mut hi) = (-spread, spread);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Interventional P(L1 = 1 | do(A0 = a0)) for categorical-binary L1.
    pub fn prob_l1_one_given_a0(&self, a0: u8) -> f64 {
        let m = self.l_threshold();
        let mu = self.alpha_l * a0 as f64;
        let sigma = self.sigma_l();
        if sigma == 0.0 {
            return if mu > m { 1.0 } else { 0.0 };
        }
        let normal = Normal::new(0.0, 1.0).unwrap();
        1.0 - normal.cdf((m - mu) / sigma)
    }

    /// Interventional mean of L1 under do(A0 = a0).
    pub fn mean_l1_given_a0(&self, a0: u8) -> f64 {
        match self.l_kind {
            LKind::Continuous => self.alpha_l * a0 as f64,
            LKind::CategoricalBinary => self.prob_l1_one_given_a0(a0),
        }
    }
}

/// Generates a dataset from the structural equations. Bit-deterministic
/// given the seed: unit i draws from an RNG substream keyed by i, so
/// generation may be partitioned across workers without changing output.
pub fn simulate(config: &DgpConfig) -> Result<Dataset> {
    config.validate()?;
    let threshold = match config.l_kind {
        LKind::CategoricalBinary => Some(config.l_threshold()),
        LKind::Continuous => None,
    };
    let lambda_l = config.lambda_l();
    let lambda_y = config.lambda_y();
    let mut units = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut rng = substream(config.seed, &[i as u64]);
        let u: f64 = if config.confounder.is_some() {
            StandardNormal.sample(&mut rng)
        } else {
            0.0
        };
        let a0 = u8::from(rng.random::<f64>() < config.p0);
        let eps_l: f64 = StandardNormal.sample(&mut rng);
        let l_star = config.alpha_l * a0 as f64 + lambda_l * u + config.noise_l * eps_l;
        let l1 = match threshold {
            Some(m) => OutcomeValue::Categorical(usize::from(l_star > m)),
            None => OutcomeValue::Continuous(l_star),
        };
        let p_a1 = config.assignment1.prob(&l1, a0)?;
        let a1 = u8::from(rng.random::<f64>() < p_a1);
        let eps_y: f64 = StandardNormal.sample(&mut rng);
        let y = config.delta * a1 as f64
            + config.eta * a0 as f64
            + config.gamma * l1.as_numeric()
            + lambda_y * u
            + config.noise_y * eps_y;
        units.push(Unit { a0, l1, a1, y: OutcomeValue::Continuous(y) });
    }
    let l_support = match config.l_kind {
        LKind::CategoricalBinary => Support::Categorical { levels: 2 },
        LKind::Continuous => Support::Continuous,
    };
    Dataset::new(units, l_support, Support::Continuous)
}

/// Analytic E[Y(a)] - E[Y(a')] under the structural equations,
/// intervening on both treatments. Invariant to n, seed, and noise.
pub fn true_effect(config: &DgpConfig, estimand: &EstimandSpec) -> Result<f64> {
    config.validate()?;
    let a = estimand.path_a;
    let ap = estimand.path_a_prime;
    let mean_y = |a0: u8, a1: u8| {
        config.delta * a1 as f64
            + config.eta * a0 as f64
            + config.gamma * config.mean_l1_given_a0(a0)
    };
    Ok(mean_y(a.a0(), a.a1()) - mean_y(ap.a0(), ap.a1()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TreatmentPath;
    use approx::assert_abs_diff_eq;

    fn contrast() -> EstimandSpec {
        EstimandSpec::full_contrast()
    }

    #[test]
    fn noiseless_units_are_exact() {
        // Table 1 row 3 parameters: every (1,1) unit has y = -0.379
        let cfg = DgpConfig { n: 2_000, delta: -0.402, eta: 0.023, seed: 3, ..DgpConfig::default() };
        let d = simulate(&cfg).unwrap();
        let mut seen = 0;
        for u in d.units() {
            if u.a0 == 1 && u.a1 == 1 {
                assert_eq!(u.y.as_numeric(), -0.402 + 0.023);
                seen += 1;
            }
        }
        assert!(seen > 100);
    }

    #[test]
    fn degenerate_p0_simulates_but_flags() {
        let cfg = DgpConfig { n: 100, delta: 0.1, eta: 0.0, p0: 1.0, seed: 1, ..DgpConfig::default() };
        let d = simulate(&cfg).unwrap();
        assert!(d.units().iter().all(|u| u.a0 == 1));
        assert!(cfg.positivity_violated());
    }

    #[test]
    fn empirical_assignment_frequency() {
        let cfg = DgpConfig { n: 100_000, delta: 0.0, eta: 0.0, seed: 8, ..DgpConfig::default() };
        let d = simulate(&cfg).unwrap();
        let p_a0 = d.units().iter().filter(|u| u.a0 == 1).count() as f64 / d.len() as f64;
        assert!((p_a0 - 0.5).abs() < 0.005, "p_a0={p_a0}");
    }

    #[test]
    fn true_effect_defaults_to_delta_plus_eta() {
        let cfg = DgpConfig { n: 10, delta: -0.217, eta: 0.055, seed: 0, ..DgpConfig::default() };
        assert_abs_diff_eq!(true_effect(&cfg, &contrast()).unwrap(), -0.162, epsilon = 1e-12);
    }

    #[test]
    fn identical_paths_zero_effect() {
        let cfg = DgpConfig { n: 10, delta: 0.3, eta: 0.1, gamma: 0.5, alpha_l: 0.2, seed: 0, ..DgpConfig::default() };
        let p = TreatmentPath::new(1, 0).unwrap();
        assert_eq!(true_effect(&cfg, &EstimandSpec::new(p, p)).unwrap(), 0.0);
    }

    #[test]
    fn mediated_effect_continuous_l() {
        let cfg = DgpConfig {
            n: 10,
            delta: 0.1,
            eta: 0.05,
            gamma: 0.5,
            alpha_l: 0.4,
            l_kind: LKind::Continuous,
            seed: 0,
            ..DgpConfig::default()
        };
        assert_abs_diff_eq!(
            true_effect(&cfg, &contrast()).unwrap(),
            0.1 + 0.05 + 0.2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn true_effect_cross_checked_by_interventional_simulation() {
        // force both treatment paths by degenerate assignment and compare
        // the mean simulated outcome difference against the analytic value
        let base = DgpConfig {
            n: 400_000,
            delta: 0.1,
            eta: 0.05,
            gamma: 0.5,
            alpha_l: 0.8,
            noise_l: 1.0,
            noise_y: 0.0,
            confounder: Some(ConfounderConfig { lambda_l: 1.0, lambda_y: 0.7 }),
            l_kind: LKind::Continuous,
            seed: 21,
            ..DgpConfig::default()
        };
        let forced_mean = |a0: f64, a1: f64, seed: u64| {
            let cfg = DgpConfig {
                p0: a0,
                assignment1: Assignment1::Constant { p: a1 },
                seed,
                ..base.clone()
            };
            let d = simulate(&cfg).unwrap();
            d.units().iter().map(|u| u.y.as_numeric()).sum::<f64>() / d.len() as f64
        };
        let tau_mc = forced_mean(1.0, 1.0, 100) - forced_mean(0.0, 0.0, 200);
        let tau = true_effect(&base, &contrast()).unwrap();
        // MC error ~ sd(Y)/sqrt(n) per arm
        assert_abs_diff_eq!(tau_mc, tau, epsilon = 0.01);
    }

    #[test]
    fn categorical_l_probability_is_probit_shaped() {
        let cfg = DgpConfig {
            n: 200_000,
            delta: 0.0,
            eta: 0.0,
            alpha_l: 0.8,
            noise_l: 1.0,
            seed: 14,
            ..DgpConfig::default()
        };
        let d = simulate(&cfg).unwrap();
        for a0 in 0..2u8 {
            let subset: Vec<_> = d.units().iter().filter(|u| u.a0 == a0).collect();
            let p_hat = subset.iter().filter(|u| u.l1.as_level() == Some(1)).count() as f64
                / subset.len() as f64;
            let p = cfg.prob_l1_one_given_a0(a0);
            assert!((p_hat - p).abs() < 0.01, "a0={a0}: {p_hat} vs {p}");
        }
        // the threshold is the marginal median
        let ones = d.units().iter().filter(|u| u.l1.as_level() == Some(1)).count() as f64;
        assert!((ones / d.len() as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn seed_determinism_and_sensitivity() {
        let cfg = DgpConfig { n: 500, delta: 0.1, eta: 0.0, noise_y: 1.0, seed: 5, ..DgpConfig::default() };
        let d1 = simulate(&cfg).unwrap();
        let d2 = simulate(&cfg).unwrap();
        assert_eq!(d1.fingerprint(), d2.fingerprint());
        let d3 = simulate(&DgpConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(d1.fingerprint(), d3.fingerprint());
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad_p0 = DgpConfig { p0: 1.5, ..DgpConfig::default() };
        assert!(matches!(bad_p0.validate(), Err(Error::InvalidConfig(m)) if m.contains("p0")));
        let bad_noise = DgpConfig { noise_l: -1.0, ..DgpConfig::default() };
        assert!(bad_noise.validate().is_err());
        let bad_n = DgpConfig { n: 0, ..DgpConfig::default() };
        assert!(bad_n.validate().is_err());
    }
}
