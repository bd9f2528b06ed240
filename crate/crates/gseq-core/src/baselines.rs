//! Deliberately naive estimators: the failure modes the G-formula
//! corrects, made executable for comparison. Each one models only the
//! final session and is reported against the sequential estimand anyway;
//! that mismatch is the point.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EstimandSpec, TreatmentPath};
use crate::error::{Error, Result};
use crate::gformula::{EffectEstimate, EstimationMethod, MethodLabel, PotentialOutcomeEstimate};
use crate::learners::{fit_line, fit_t_learner, CovariateKey, OutcomeField, Signature};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Pooled regression of Y on A1 alone.
    IgnoreHistory,
    /// Within-(A1, L1) fits standardized over the marginal L1 distribution.
    ConditionOnL,
    /// Per-A1-arm T-learner with no sequential adjustment.
    FinalArmTLearner,
}

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::IgnoreHistory => "ignore-history",
            BaselineKind::ConditionOnL => "condition-on-l",
            BaselineKind::FinalArmTLearner => "final-arm-t-learner",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "ignore-history" => Some(BaselineKind::IgnoreHistory),
            "condition-on-l" => Some(BaselineKind::ConditionOnL),
            "final-arm-t-learner" => Some(BaselineKind::FinalArmTLearner),
            _ => None,
        }
    }
}

/// Estimates the contrast with a naive final-session estimator.
/// The estimand must differ in a1; the naive learners cannot see a0.
pub fn naive_effect(
    dataset: &Dataset,
    kind: BaselineKind,
    estimand: &EstimandSpec,
) -> Result<EffectEstimate> {
    if estimand.path_a.a1() == estimand.path_a_prime.a1() {
        return Err(Error::InvalidInput(
            "naive estimator cannot distinguish these paths (equal a1)".into(),
        ));
    }
    let value_at = value_fn(dataset, kind)?;
    let mk = |path: TreatmentPath, v: f64| PotentialOutcomeEstimate {
        path,
        value: v,
        method: EstimationMethod::PlugInSum,
        mc_std_error: None,
    };
    let va = value_at(estimand.path_a.a1())?;
    let vap = value_at(estimand.path_a_prime.a1())?;
    Ok(EffectEstimate {
        estimand: *estimand,
        tau_hat: va - vap,
        per_path: [mk(estimand.path_a, va), mk(estimand.path_a_prime, vap)],
        method: MethodLabel::Baseline(kind),
        k: None,
        seed: None,
        warnings: Vec::new(),
    })
}

type ValueFn<'a> = Box<dyn Fn(u8) -> Result<f64> + 'a>;

fn value_fn(dataset: &Dataset, kind: BaselineKind) -> Result<ValueFn<'_>> {
    match kind {
        BaselineKind::IgnoreHistory => {
            let xs: Vec<f64> = dataset.units().iter().map(|u| u.a1 as f64).collect();
            let ys: Vec<f64> = dataset.units().iter().map(|u| u.y.as_numeric()).collect();
            let fit = fit_line(Some(&xs), &ys);
            if fit.rank_deficient {
                return Err(Error::Positivity {
                    stratum: format!("(a1={})", 1 - dataset.units()[0].a1),
                });
            }
            let (b0, b1) = (fit.intercept, fit.slope.unwrap());
            Ok(Box::new(move |a1| Ok(b0 + b1 * a1 as f64)))
        }
        BaselineKind::FinalArmTLearner => {
            let model = fit_t_learner(dataset, OutcomeField::Y, Signature::FINAL_ARM)?;
            Ok(Box::new(move |a1| model.predict_mean(&CovariateKey::final_arm(a1))))
        }
        BaselineKind::ConditionOnL => {
            if dataset.l_support().is_categorical() {
                condition_on_categorical_l(dataset)
            } else {
                condition_on_continuous_l(dataset)
            }
        }
    }
}

/// Standardizes within-(A1, L1) cell means over the marginal empirical
/// distribution of L1.
fn condition_on_categorical_l(dataset: &Dataset) -> Result<ValueFn<'_>> {
    let levels = dataset.l_support().levels().expect("categorical");
    let n = dataset.len() as f64;
    let mut marginal = vec![0usize; levels];
    let mut cell_n = vec![[0usize; 2]; levels];
    let mut cell_sum = vec![[0.0f64; 2]; levels];
    for u in dataset.units() {
        let l = u.l1.as_level().expect("categorical support");
        marginal[l] += 1;
        cell_n[l][u.a1 as usize] += 1;
        cell_sum[l][u.a1 as usize] += u.y.as_numeric();
    }
    Ok(Box::new(move |a1| {
        let mut value = 0.0;
        for l in 0..levels {
            if marginal[l] == 0 {
                continue;
            }
            let c = cell_n[l][a1 as usize];
            if c == 0 {
                return Err(Error::Positivity { stratum: format!("(l1={l},a1={a1})") });
            }
            value += (marginal[l] as f64 / n) * (cell_sum[l][a1 as usize] / c as f64);
        }
        Ok(value)
    }))
}

/// Continuous L1: per-A1-arm regression on l1, predictions averaged over
/// the empirical l1 values of the whole sample.
fn condition_on_continuous_l(dataset: &Dataset) -> Result<ValueFn<'_>> {
    let model = fit_t_learner(dataset, OutcomeField::Y, Signature::FINAL_ARM_WITH_L)?;
    Ok(Box::new(move |a1| {
        let mut total = 0.0;
        for u in dataset.units() {
            let key = CovariateKey { a0: None, a1: Some(a1), l1: Some(u.l1) };
            total += model.predict_mean(&key)?;
        }
        Ok(total / dataset.len() as f64)
    }))
}
