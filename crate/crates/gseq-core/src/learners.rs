//! Conditional outcome models: empirical PMF tables for categorical
//! outcomes and per-arm Gaussian regressions (the T-learner composition).
//!
//! A model's *signature* fixes which covariates it conditions on. The
//! G-formula uses g(Y | L1, A0, A1) and f(L1 | A0); the naive baselines
//! use signatures that deliberately drop parts of the history.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, OutcomeValue, Support, Unit};
use crate::error::{Error, Result};

/// Which observed outcome a model is fit to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeField {
    L1,
    Y,
}

impl OutcomeField {
    fn value(&self, u: &Unit) -> OutcomeValue {
        match self {
            OutcomeField::L1 => u.l1,
            OutcomeField::Y => u.y,
        }
    }

    fn support(&self, d: &Dataset) -> Support {
        match self {
            OutcomeField::L1 => d.l_support(),
            OutcomeField::Y => d.y_support(),
        }
    }
}

/// The conditioning signature of a fitted model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub a0: bool,
    pub a1: bool,
    pub l1: bool,
}

impl Signature {
    /// g(Y | L1, A0, A1)
    pub const OUTCOME: Signature = Signature { a0: true, a1: true, l1: true };
    /// f(L1 | A0)
    pub const INTERMEDIATE: Signature = Signature { a0: true, a1: false, l1: false };
    /// Final-arm-only conditioning, used by the naive baselines.
    pub const FINAL_ARM: Signature = Signature { a0: false, a1: true, l1: false };
    /// (A1, L1) conditioning, used by the condition-on-L baseline.
    pub const FINAL_ARM_WITH_L: Signature = Signature { a0: false, a1: true, l1: true };
}

/// Conditioning arguments for prediction/sampling. Fields must match the
/// model's signature exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovariateKey {
    pub a0: Option<u8>,
    pub a1: Option<u8>,
    pub l1: Option<OutcomeValue>,
}

impl CovariateKey {
    pub fn outcome(l1: OutcomeValue, a0: u8, a1: u8) -> Self {
        Self { a0: Some(a0), a1: Some(a1), l1: Some(l1) }
    }

    pub fn intermediate(a0: u8) -> Self {
        Self { a0: Some(a0), a1: None, l1: None }
    }

    pub fn final_arm(a1: u8) -> Self {
        Self { a0: None, a1: Some(a1), l1: None }
    }

    fn matches(&self, sig: &Signature) -> bool {
        self.a0.is_some() == sig.a0 && self.a1.is_some() == sig.a1 && self.l1.is_some() == sig.l1
    }
}

impl fmt::Display for CovariateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(l) = self.l1 {
            match l {
                OutcomeValue::Categorical(k) => parts.push(format!("l1={k}")),
                OutcomeValue::Continuous(x) => parts.push(format!("l1={x}")),
            }
        }
        if let Some(a0) = self.a0 {
            parts.push(format!("a0={a0}"));
        }
        if let Some(a1) = self.a1 {
            parts.push(format!("a1={a1}"));
        }
        write!(f, "({})", parts.join(","))
    }
}

/// Discrete stratum key for PMF tables; l1 must be categorical.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PmfKey {
    pub l1: Option<usize>,
    pub a0: Option<u8>,
    pub a1: Option<u8>,
}

impl PmfKey {
    fn project(sig: &Signature, u: &Unit) -> Result<Self> {
        Ok(Self {
            l1: if sig.l1 {
                Some(u.l1.as_level().ok_or_else(|| {
                    Error::InvalidInput("PMF conditioning requires categorical l1".into())
                })?)
            } else {
                None
            },
            a0: sig.a0.then_some(u.a0),
            a1: sig.a1.then_some(u.a1),
        })
    }

    fn from_key(sig: &Signature, key: &CovariateKey) -> Result<Self> {
        if !key.matches(sig) {
            return Err(Error::InvalidInput(format!(
                "covariate key {key} does not match model signature {sig:?}"
            )));
        }
        let l1 = match key.l1 {
            Some(v) => Some(v.as_level().ok_or_else(|| {
                Error::InvalidInput("PMF lookup requires categorical l1".into())
            })?),
            None => None,
        };
        Ok(Self { l1, a0: key.a0, a1: key.a1 })
    }
}

impl fmt::Display for PmfKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(l) = self.l1 {
            parts.push(format!("l1={l}"));
        }
        if let Some(a0) = self.a0 {
            parts.push(format!("a0={a0}"));
        }
        if let Some(a1) = self.a1 {
            parts.push(format!("a1={a1}"));
        }
        write!(f, "({})", parts.join(","))
    }
}

/// Treatment-arm stratum key for the stratified Gaussian form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArmKey {
    pub a0: Option<u8>,
    pub a1: Option<u8>,
}

impl fmt::Display for ArmKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(a0) = self.a0 {
            parts.push(format!("a0={a0}"));
        }
        if let Some(a1) = self.a1 {
            parts.push(format!("a1={a1}"));
        }
        write!(f, "({})", parts.join(","))
    }
}

/// One stratum of a PMF table: empirical relative frequencies over the
/// outcome support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfStratum {
    pub key: PmfKey,
    pub probs: Vec<f64>,
    pub count: usize,
}

/// One treatment-arm regression of the stratified Gaussian form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianArm {
    pub key: ArmKey,
    pub intercept: f64,
    /// Present iff the model signature includes l1 as a covariate.
    pub slope_l1: Option<f64>,
    /// Maximum-likelihood (1/n) residual variance; zero means a
    /// point-mass predictive.
    pub residual_variance: f64,
    pub count: usize,
    pub rank_deficient: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ModelForm {
    /// Strata sorted by key; rows sum to 1.
    PmfTable { strata: Vec<PmfStratum> },
    /// One independent OLS fit per treatment-arm stratum.
    StratifiedGaussian { arms: Vec<GaussianArm> },
}

/// A fitted conditional outcome model. Immutable; safe for concurrent
/// prediction and sampling (each consumer owns its RNG).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalModel {
    pub signature: Signature,
    pub outcome_support: Support,
    #[serde(flatten)]
    pub form: ModelForm,
    /// Fit warnings, e.g. rank-deficient within-stratum designs.
    pub warnings: Vec<String>,
}

impl ConditionalModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn pmf_row(&self, key: &PmfKey) -> Result<&PmfStratum> {
        let ModelForm::PmfTable { strata } = &self.form else {
            return Err(Error::InvalidInput("not a PMF model".into()));
        };
        strata
            .binary_search_by(|s| s.key.cmp(key))
            .map(|i| &strata[i])
            .map_err(|_| Error::Positivity { stratum: key.to_string() })
    }

    fn gaussian_arm(&self, key: &CovariateKey) -> Result<(&GaussianArm, f64)> {
        if !key.matches(&self.signature) {
            return Err(Error::InvalidInput(format!(
                "covariate key {key} does not match model signature {:?}",
                self.signature
            )));
        }
        let ModelForm::StratifiedGaussian { arms } = &self.form else {
            return Err(Error::InvalidInput("not a stratified Gaussian model".into()));
        };
        let arm_key = ArmKey { a0: key.a0, a1: key.a1 };
        let arm = arms
            .binary_search_by(|a| a.key.cmp(&arm_key))
            .map(|i| &arms[i])
            .map_err(|_| Error::Positivity { stratum: arm_key.to_string() })?;
        let mean = match arm.slope_l1 {
            Some(b1) => {
                let l = key.l1.ok_or_else(|| {
                    Error::InvalidInput("model conditions on l1 but key omits it".into())
                })?;
                arm.intercept + b1 * l.as_numeric()
            }
            None => arm.intercept,
        };
        Ok((arm, mean))
    }

    /// Conditional mean at `key`. PMF tables take the expectation of the
    /// numeric level codes; Gaussian arms evaluate the fitted line.
    pub fn predict_mean(&self, key: &CovariateKey) -> Result<f64> {
        match &self.form {
            ModelForm::PmfTable { .. } => {
                let pkey = PmfKey::from_key(&self.signature, key)?;
                let row = self.pmf_row(&pkey)?;
                Ok(row
                    .probs
                    .iter()
                    .enumerate()
                    .map(|(level, p)| level as f64 * p)
                    .sum())
            }
            ModelForm::StratifiedGaussian { .. } => Ok(self.gaussian_arm(key)?.1),
        }
    }

    /// Draws one outcome from the fitted conditional distribution.
    pub fn sample_outcome<R: Rng>(&self, key: &CovariateKey, rng: &mut R) -> Result<OutcomeValue> {
        match &self.form {
            ModelForm::PmfTable { .. } => {
                let pkey = PmfKey::from_key(&self.signature, key)?;
                let row = self.pmf_row(&pkey)?;
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (level, p) in row.probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(OutcomeValue::Categorical(level));
                    }
                }
                // u landed in the rounding slack past the last positive mass
                let last = row
                    .probs
                    .iter()
                    .rposition(|&p| p > 0.0)
                    .expect("PMF row has positive mass");
                Ok(OutcomeValue::Categorical(last))
            }
            ModelForm::StratifiedGaussian { .. } => {
                let (arm, mean) = self.gaussian_arm(key)?;
                if arm.residual_variance == 0.0 {
                    return Ok(OutcomeValue::Continuous(mean));
                }
                let normal = Normal::new(mean, arm.residual_variance.sqrt())
                    .expect("finite mean and std dev");
                Ok(OutcomeValue::Continuous(normal.sample(rng)))
            }
        }
    }
}

/// Fits an empirical PMF table of the selected categorical outcome over
/// the signature's strata. Strata never observed in training are absent
/// from the table; querying them raises a positivity error.
pub fn fit_pmf(dataset: &Dataset, outcome: OutcomeField, signature: Signature) -> Result<ConditionalModel> {
    let support = outcome.support(dataset);
    let Some(levels) = support.levels() else {
        return Err(Error::InvalidInput("PMF fit requires categorical outcome".into()));
    };
    let mut strata: Vec<(PmfKey, Vec<usize>)> = Vec::new();
    for u in dataset.units() {
        let key = PmfKey::project(&signature, u)?;
        let level = outcome
            .value(u)
            .as_level()
            .expect("support declared categorical admits only level codes");
        let counts = match strata.binary_search_by(|(k, _)| k.cmp(&key)) {
            Ok(i) => &mut strata[i].1,
            Err(i) => {
                strata.insert(i, (key, vec![0usize; levels]));
                &mut strata[i].1
            }
        };
        counts[level] += 1;
    }
    let strata = strata
        .into_iter()
        .map(|(key, counts)| {
            let n: usize = counts.iter().sum();
            PmfStratum {
                key,
                probs: counts.iter().map(|&c| c as f64 / n as f64).collect(),
                count: n,
            }
        })
        .collect();
    Ok(ConditionalModel {
        signature,
        outcome_support: support,
        form: ModelForm::PmfTable { strata },
        warnings: Vec::new(),
    })
}

/// Ordinary least squares of y on an optional single covariate plus an
/// intercept. Rank-deficient designs (constant covariate) fall back to
/// the minimum-norm solution of the normal equations.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LineFit {
    pub intercept: f64,
    pub slope: Option<f64>,
    /// Mean squared residual (1/n divisor).
    pub residual_variance: f64,
    pub rank_deficient: bool,
    /// Conventional (n-2 divisor) standard error of the slope; None for
    /// intercept-only or rank-deficient fits.
    pub slope_std_error: Option<f64>,
}

pub(crate) fn fit_line(xs: Option<&[f64]>, ys: &[f64]) -> LineFit {
    let n = ys.len() as f64;
    // bit-constant outcomes get an exact mean and exactly zero variance,
    // keeping noiseless fits degenerate rather than eps-noisy
    let const_y = ys.windows(2).all(|w| w[0] == w[1]);
    let y_mean = if const_y { ys[0] } else { ys.iter().sum::<f64>() / n };
    let Some(xs) = xs else {
        let rv = if const_y {
            0.0
        } else {
            ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n
        };
        return LineFit {
            intercept: y_mean,
            slope: None,
            residual_variance: rv,
            rank_deficient: false,
            slope_std_error: None,
        };
    };
    debug_assert_eq!(xs.len(), ys.len());
    let x_mean = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let x_scale: f64 = 1.0 + xs.iter().map(|x| x * x).sum::<f64>() / n;
    if sxx <= 1e-12 * n * x_scale {
        // x is constant at c: minimum-norm solution of X'X b = X'y is
        // (ȳ / (1 + c²)) · (1, c), which still predicts ȳ at x = c.
        let c = x_mean;
        let scale = y_mean / (1.0 + c * c);
        let rv = if const_y {
            0.0
        } else {
            ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n
        };
        return LineFit {
            intercept: scale,
            slope: Some(scale * c),
            residual_variance: rv,
            rank_deficient: true,
            slope_std_error: None,
        };
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_std_error = if ys.len() > 2 {
        Some((rss / (n - 2.0) / sxx).sqrt())
    } else {
        None
    };
    LineFit {
        intercept,
        slope: Some(slope),
        residual_variance: rss / n,
        rank_deficient: false,
        slope_std_error,
    }
}

/// Fits one independent Gaussian regression per treatment-arm stratum of
/// the signature (OLS on l1 when the signature includes it, intercept-only
/// otherwise). Categorical outcomes are regressed as their numeric codes.
/// Every arm combination must be observed; an empty arm is a positivity
/// failure.
pub fn fit_t_learner(
    dataset: &Dataset,
    outcome: OutcomeField,
    signature: Signature,
) -> Result<ConditionalModel> {
    if signature.l1 && outcome == OutcomeField::L1 {
        return Err(Error::InvalidInput("cannot condition l1 on itself".into()));
    }
    let expected_arms = arm_keys(&signature);
    let mut groups: Vec<(ArmKey, Vec<f64>, Vec<f64>)> = expected_arms
        .iter()
        .map(|&key| (key, Vec::new(), Vec::new()))
        .collect();
    for u in dataset.units() {
        let key = ArmKey {
            a0: signature.a0.then_some(u.a0),
            a1: signature.a1.then_some(u.a1),
        };
        let idx = groups
            .binary_search_by(|(k, _, _)| k.cmp(&key))
            .expect("all binary arm combinations enumerated");
        if signature.l1 {
            groups[idx].1.push(u.l1.as_numeric());
        }
        groups[idx].2.push(outcome.value(u).as_numeric());
    }
    let mut arms = Vec::with_capacity(groups.len());
    let mut warnings = Vec::new();
    for (key, xs, ys) in &groups {
        if ys.is_empty() {
            return Err(Error::Positivity { stratum: key.to_string() });
        }
        let fit = fit_line(signature.l1.then_some(xs.as_slice()), ys);
        if fit.rank_deficient {
            warnings.push(format!("rank-deficient design in arm {key}; minimum-norm fit used"));
        }
        arms.push(GaussianArm {
            key: *key,
            intercept: fit.intercept,
            slope_l1: fit.slope,
            residual_variance: fit.residual_variance,
            count: ys.len(),
            rank_deficient: fit.rank_deficient,
        });
    }
    Ok(ConditionalModel {
        signature,
        outcome_support: outcome.support(dataset),
        form: ModelForm::StratifiedGaussian { arms },
        warnings,
    })
}

/// All arm combinations implied by a signature, sorted.
fn arm_keys(sig: &Signature) -> Vec<ArmKey> {
    let a0s: &[Option<u8>] = if sig.a0 { &[Some(0), Some(1)] } else { &[None] };
    let a1s: &[Option<u8>] = if sig.a1 { &[Some(0), Some(1)] } else { &[None] };
    let mut keys: Vec<ArmKey> = a0s
        .iter()
        .flat_map(|&a0| a1s.iter().map(move |&a1| ArmKey { a0, a1 }))
        .collect();
    keys.sort();
    keys
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Support, Unit};
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;

    fn cat(k: usize) -> OutcomeValue {
        OutcomeValue::Categorical(k)
    }

    fn cont(x: f64) -> OutcomeValue {
        OutcomeValue::Continuous(x)
    }

    fn binary_dataset(rows: &[(u8, usize, u8, f64)]) -> Dataset {
        let units = rows
            .iter()
            .map(|&(a0, l1, a1, y)| Unit { a0, l1: cat(l1), a1, y: cont(y) })
            .collect();
        Dataset::new(units, Support::Categorical { levels: 2 }, Support::Continuous).unwrap()
    }

    #[test]
    fn pmf_deterministic_strata() {
        // L1 = a0 exactly
        let rows: Vec<(u8, usize, u8, f64)> =
            (0..8).map(|i| ((i % 2) as u8, (i % 2) as usize, 0, 0.0)).collect();
        let d = binary_dataset(&rows);
        let m = fit_pmf(&d, OutcomeField::L1, Signature::INTERMEDIATE).unwrap();
        let p1 = m
            .pmf_row(&PmfKey { l1: None, a0: Some(1), a1: None })
            .unwrap();
        assert_eq!(p1.probs, vec![0.0, 1.0]);
    }

    #[test]
    fn pmf_counts_relative_frequencies() {
        let d = binary_dataset(&[(1, 0, 0, 0.0), (1, 0, 0, 0.0), (1, 1, 0, 0.0), (1, 1, 0, 0.0), (0, 0, 0, 0.0)]);
        let m = fit_pmf(&d, OutcomeField::L1, Signature::INTERMEDIATE).unwrap();
        let row = m
            .pmf_row(&PmfKey { l1: None, a0: Some(1), a1: None })
            .unwrap();
        assert_eq!(row.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn pmf_requires_categorical_outcome() {
        let d = binary_dataset(&[(0, 0, 0, 1.0)]);
        let err = fit_pmf(&d, OutcomeField::Y, Signature::OUTCOME).unwrap_err();
        assert!(err.to_string().contains("PMF fit requires categorical outcome"));
    }

    #[test]
    fn pmf_rows_sum_to_one() {
        let mut rng = substream(9, &[0]);
        let rows: Vec<(u8, usize, u8, f64)> = (0..500)
            .map(|_| {
                use rand::Rng;
                (rng.random_range(0..2u8), rng.random_range(0..3usize), rng.random_range(0..2u8), 0.0)
            })
            .collect();
        let units: Vec<Unit> = rows
            .iter()
            .map(|&(a0, l1, a1, _)| Unit { a0, l1: cat(l1), a1, y: cont(0.0) })
            .collect();
        let d = Dataset::new(units, Support::Categorical { levels: 3 }, Support::Continuous).unwrap();
        let m = fit_pmf(&d, OutcomeField::L1, Signature::INTERMEDIATE).unwrap();
        let ModelForm::PmfTable { strata } = &m.form else { unreachable!() };
        for s in strata {
            let total: f64 = s.probs.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unseen_stratum_is_positivity_error() {
        let d = binary_dataset(&[(0, 0, 0, 1.0)]);
        let m = fit_pmf(&d, OutcomeField::L1, Signature::INTERMEDIATE).unwrap();
        let err = m.predict_mean(&CovariateKey::intermediate(1)).unwrap_err();
        assert!(matches!(err, Error::Positivity { .. }), "{err}");
    }

    #[test]
    fn t_learner_recovers_noiseless_dgp_arm() {
        // Y = delta*a1 + eta*a0 with delta=0.118, eta=-0.015: the (1,1)
        // arm is constant at 0.103.
        let delta = 0.118;
        let eta = -0.015;
        let rows: Vec<(u8, usize, u8, f64)> = (0..40)
            .map(|i| {
                let a0 = (i % 2) as u8;
                let a1 = ((i / 2) % 2) as u8;
                (a0, 0usize, a1, delta * a1 as f64 + eta * a0 as f64)
            })
            .collect();
        let d = binary_dataset(&rows);
        let m = fit_t_learner(&d, OutcomeField::Y, Signature::OUTCOME).unwrap();
        let mean = m
            .predict_mean(&CovariateKey::outcome(cat(0), 1, 1))
            .unwrap();
        assert_abs_diff_eq!(mean, 0.103, epsilon = 1e-12);
        let ModelForm::StratifiedGaussian { arms } = &m.form else { unreachable!() };
        let arm = arms
            .iter()
            .find(|a| a.key == ArmKey { a0: Some(1), a1: Some(1) })
            .unwrap();
        assert_eq!(arm.residual_variance, 0.0);
        // l1 is constant 0, so the design is rank deficient and flagged
        assert!(arm.rank_deficient);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn constant_single_arm_fit() {
        let d = binary_dataset(&[(0, 0, 0, 3.25), (0, 1, 0, 3.25), (0, 0, 0, 3.25)]);
        let m = fit_t_learner(&d, OutcomeField::Y, Signature { a0: true, a1: true, l1: false });
        // arms (0,1), (1,0), (1,1) are empty
        assert!(matches!(m.unwrap_err(), Error::Positivity { .. }));
        let m = fit_t_learner(&d, OutcomeField::Y, Signature { a0: false, a1: false, l1: false }).unwrap();
        let key = CovariateKey { a0: None, a1: None, l1: None };
        assert_eq!(m.predict_mean(&key).unwrap(), 3.25);
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        // brute-force 2x2 normal equations on the same rows
        let xs = [0.0, 1.0, 0.0, 1.0, 2.0, 3.0];
        let ys = [0.3, 1.1, -0.2, 1.4, 2.2, 2.9];
        let fit = fit_line(Some(&xs), &ys);
        let n = xs.len() as f64;
        let (sx, sxx, sy, sxy) = xs.iter().zip(&ys).fold((0.0, 0.0, 0.0, 0.0), |acc, (x, y)| {
            (acc.0 + x, acc.1 + x * x, acc.2 + y, acc.3 + x * y)
        });
        let det = n * sxx - sx * sx;
        let b0 = (sxx * sy - sx * sxy) / det;
        let b1 = (n * sxy - sx * sy) / det;
        assert_abs_diff_eq!(fit.intercept, b0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.slope.unwrap(), b1, epsilon = 1e-10);
    }

    #[test]
    fn intercept_only_mean() {
        let fit = fit_line(None, &[1.0, 2.0, 3.0]);
        assert_eq!(fit.intercept, 2.0);
    }

    #[test]
    fn degenerate_sampling_is_deterministic() {
        let d = binary_dataset(&[(0, 0, 0, 5.0), (0, 1, 0, 5.0)]);
        let m = fit_t_learner(&d, OutcomeField::Y, Signature { a0: false, a1: false, l1: false }).unwrap();
        let key = CovariateKey { a0: None, a1: None, l1: None };
        let mut rng = substream(1, &[0]);
        for _ in 0..10 {
            assert_eq!(m.sample_outcome(&key, &mut rng).unwrap(), cont(5.0));
        }
    }

    #[test]
    fn point_mass_pmf_sampling() {
        let d = binary_dataset(&[(0, 0, 0, 0.0), (0, 0, 0, 0.0)]);
        let m = fit_pmf(&d, OutcomeField::L1, Signature::INTERMEDIATE).unwrap();
        let mut rng = substream(2, &[0]);
        for _ in 0..10 {
            assert_eq!(
                m.sample_outcome(&CovariateKey::intermediate(0), &mut rng).unwrap(),
                cat(0)
            );
        }
    }

    #[test]
    fn pmf_sampling_frequencies_concentrate() {
        // P(level 1) = 0.7; 100k draws within +/- 0.005
        let mut rows = Vec::new();
        for _ in 0..3 {
            rows.push((0u8, 0usize, 0u8, 0.0));
        }
        for _ in 0..7 {
            rows.push((0u8, 1usize, 0u8, 0.0));
        }
        let d = binary_dataset(&rows);
        let m = fit_pmf(&d, OutcomeField::L1, Signature::INTERMEDIATE).unwrap();
        let mut rng = substream(7, &[3]);
        let k = 100_000;
        let mut ones = 0usize;
        for _ in 0..k {
            if m.sample_outcome(&CovariateKey::intermediate(0), &mut rng).unwrap() == cat(1) {
                ones += 1;
            }
        }
        let freq = ones as f64 / k as f64;
        assert!((freq - 0.7).abs() < 0.005, "freq={freq}");
    }

    #[test]
    fn bernoulli_expectation() {
        let d = binary_dataset(&[(0, 0, 0, 0.0), (0, 1, 0, 0.0), (0, 1, 0, 0.0), (0, 1, 0, 0.0)]);
        let m = fit_pmf(&d, OutcomeField::L1, Signature::INTERMEDIATE).unwrap();
        assert_eq!(m.predict_mean(&CovariateKey::intermediate(0)).unwrap(), 0.75);
    }

    #[test]
    fn refit_on_permuted_dataset_identical() {
        let rows: Vec<(u8, usize, u8, f64)> = (0..30)
            .map(|i| ((i % 2) as u8, (i % 2) as usize, ((i / 3) % 2) as u8, i as f64 * 0.37))
            .collect();
        let d = binary_dataset(&rows);
        let mut rev = rows.clone();
        rev.reverse();
        let d_rev = binary_dataset(&rev);
        let m1 = fit_t_learner(&d, OutcomeField::Y, Signature::OUTCOME).unwrap();
        let m2 = fit_t_learner(&d_rev, OutcomeField::Y, Signature::OUTCOME).unwrap();
        let ModelForm::StratifiedGaussian { arms: a1 } = &m1.form else { unreachable!() };
        let ModelForm::StratifiedGaussian { arms: a2 } = &m2.form else { unreachable!() };
        for (x, y) in a1.iter().zip(a2) {
            assert_eq!(x.key, y.key);
            assert_abs_diff_eq!(x.intercept, y.intercept, epsilon = 1e-12);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let d = binary_dataset(&[(0, 0, 0, 1.0), (0, 1, 1, 2.0), (1, 0, 0, 3.0), (1, 1, 1, 4.0)]);
        let m = fit_t_learner(&d, OutcomeField::Y, Signature::OUTCOME).unwrap();
        let json = m.to_json().unwrap();
        let m2 = ConditionalModel::from_json(&json).unwrap();
        assert_eq!(m, m2);
        assert_eq!(json, m2.to_json().unwrap());
    }
}
