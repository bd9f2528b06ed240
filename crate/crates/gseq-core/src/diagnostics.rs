//! Assumption diagnostics: empirical positivity checks and the g-null
//! misspecification sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EstimandSpec};
use crate::error::{Error, Result};
use crate::dgp::{simulate, DgpConfig};
use crate::gformula::{
    estimate_effect_with_models, fit_g_models_auto, plugin_effect_std_error, GMethod,
};
use crate::learners::fit_line;
use crate::rng::derive_seed;

/// Empirical assignment probabilities per declared (l1, a0) stratum, with
/// violations of an epsilon-bounded positivity requirement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub epsilon: f64,
    /// Empirical P(A0 = 1).
    pub p_a0: f64,
    pub a0_violation: bool,
    /// True when L1 is continuous; strata then condition on a0 only.
    pub continuous_l: bool,
    pub strata: Vec<StratumReport>,
    /// Human-readable descriptions of every flagged stratum.
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1: Option<usize>,
    pub a0: u8,
    pub count: usize,
    /// Empirical P(A1 = 1 | stratum); absent for empty strata.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_a1: Option<f64>,
}

impl PositivityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat CSV, one row per stratum.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l1,a0,count,p_a1,violation\n");
        for s in &self.strata {
            let l1 = s.l1.map(|l| l.to_string()).unwrap_or_default();
            let p = s.p_a1.map(|p| format!("{p:.16e}")).unwrap_or_default();
            let violated = self
                .violations
                .iter()
                .any(|v| v.starts_with(&stratum_label(s.l1, s.a0)));
            out.push_str(&format!("{l1},{},{},{p},{violated}\n", s.a0, s.count));
        }
        out
    }
}

fn stratum_label(l1: Option<usize>, a0: u8) -> String {
    match l1 {
        Some(l) => format!("(l1={l},a0={a0})"),
        None => format!("(a0={a0})"),
    }
}

/// Checks the empirical assignment mechanism against an epsilon-bounded
/// positivity requirement. Diagnostics never abort: degenerate and empty
/// strata are reported, not raised.
pub fn check_positivity(dataset: &Dataset, epsilon: f64) -> Result<PositivityReport> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be in [0, 0.5), got {epsilon}"
        )));
    }
    let n = dataset.len() as f64;
    let p_a0 = dataset.units().iter().filter(|u| u.a0 == 1).count() as f64 / n;
    let a0_violation = p_a0 <= epsilon || p_a0 >= 1.0 - epsilon;
    let mut violations = Vec::new();
    if a0_violation {
        violations.push(format!("A0: P(A0=1)={p_a0} outside ({epsilon}, {})", 1.0 - epsilon));
    }

    let l_levels = dataset.l_support().levels();
    let continuous_l = l_levels.is_none();
    let mut strata = Vec::new();
    let level_keys: Vec<Option<usize>> = match l_levels {
        Some(levels) => (0..levels).map(Some).collect(),
        None => vec![None],
    };
    for l1 in level_keys {
        for a0 in 0..2u8 {
            let cell: Vec<_> = dataset
                .units()
                .iter()
                .filter(|u| u.a0 == a0 && (l1.is_none() || u.l1.as_level() == l1))
                .collect();
            let count = cell.len();
            let p_a1 = (count > 0)
                .then(|| cell.iter().filter(|u| u.a1 == 1).count() as f64 / count as f64);
            let label = stratum_label(l1, a0);
            match p_a1 {
                None => violations.push(format!("{label}: empty stratum")),
                Some(p) if p <= epsilon || p >= 1.0 - epsilon => {
                    violations.push(format!("{label}: P(A1=1)={p} outside ({epsilon}, {})", 1.0 - epsilon));
                }
                Some(_) => {}
            }
            strata.push(StratumReport { l1, a0, count, p_a1 });
        }
    }
    Ok(PositivityReport { epsilon, p_a0, a0_violation, continuous_l, strata, violations })
}

/// Model specification contrasted by the g-null sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSpec {
    /// G-formula with T-learner base models (saturated for binary L1).
    FlexibleTLearner,
    /// Pooled single regression of Y on a1, ignoring L1 and A0.
    MisspecifiedParsimonious,
}

impl ModelSpec {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelSpec::FlexibleTLearner => "flexible-t-learner",
            ModelSpec::MisspecifiedParsimonious => "misspecified-parsimonious",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub spec: ModelSpec,
    pub mean_bias: f64,
    pub rejection_fraction: f64,
    pub replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub null_true: bool,
    /// z threshold of the per-replication test |tau_hat| > z * se.
    pub z: f64,
    pub grid: Vec<SweepRow>,
}

impl SensitivityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,spec,mean_bias,rejection_fraction,replications\n");
        for r in &self.grid {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{}\n",
                r.n,
                r.spec.as_str(),
                r.mean_bias,
                r.rejection_fraction,
                r.replications
            ));
        }
        out
    }
}

const SWEEP_Z: f64 = 1.96;

/// Runs the g-null paradox sweep: on a truly null DGP, contrasts the
/// rejection behavior of the flexible T-learner G-formula against a
/// misspecified parsimonious regression across sample sizes.
///
/// Each replication tests |tau_hat| > 1.96 * se, where se is the
/// estimator's sampling standard error (delta method for the saturated
/// G-formula, conventional OLS slope error for the pooled regression).
pub fn gnull_sweep(
    scenario: &DgpConfig,
    n_grid: &[usize],
    replications: usize,
    specs: &[ModelSpec],
    seed: u64,
) -> Result<SensitivityReport> {
    // n is overridden per grid point, so validate a probe config
    DgpConfig { n: 1, ..scenario.clone() }.validate()?;
    if scenario.delta != 0.0 || scenario.eta != 0.0 || scenario.gamma != 0.0 {
        return Err(Error::InvalidConfig("g-null sweep requires a null DGP".into()));
    }
    if !matches!(scenario.l_kind, crate::dgp::LKind::CategoricalBinary) {
        return Err(Error::InvalidConfig(
            "g-null sweep requires categorical-binary L1 (the flexible spec's standard error assumes a saturated model)".into(),
        ));
    }
    if replications == 0 || n_grid.is_empty() || specs.is_empty() {
        return Err(Error::InvalidConfig("sweep needs n_grid, specs, and replications >= 1".into()));
    }
    let estimand = EstimandSpec::full_contrast();
    let mut grid = Vec::new();
    for (n_idx, &n) in n_grid.iter().enumerate() {
        // (bias, rejected) per replication per spec, replications in parallel
        let cells: Vec<Vec<(f64, bool)>> = (0..replications)
            .into_par_iter()
            .map(|rep| -> Result<Vec<(f64, bool)>> {
                let cfg = DgpConfig {
                    n,
                    seed: derive_seed(seed, &[n_idx as u64, rep as u64]),
                    ..scenario.clone()
                };
                let data = simulate(&cfg)?;
                specs
                    .iter()
                    .map(|spec| {
                        let (tau, se) = estimate_for_spec(&data, *spec, &estimand)?;
                        Ok((tau, tau.abs() > SWEEP_Z * se))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (s_idx, spec) in specs.iter().enumerate() {
            let biases: Vec<f64> = cells.iter().map(|c| c[s_idx].0).collect();
            let rejected = cells.iter().filter(|c| c[s_idx].1).count();
            grid.push(SweepRow {
                n,
                spec: *spec,
                mean_bias: biases.iter().sum::<f64>() / replications as f64,
                rejection_fraction: rejected as f64 / replications as f64,
                replications,
            });
        }
    }
    Ok(SensitivityReport { null_true: true, z: SWEEP_Z, grid })
}

fn estimate_for_spec(
    data: &Dataset,
    spec: ModelSpec,
    estimand: &EstimandSpec,
) -> Result<(f64, f64)> {
    match spec {
        ModelSpec::FlexibleTLearner => {
            let (g, f) = fit_g_models_auto(data)?;
            let est = estimate_effect_with_models(&g, &f, estimand, GMethod::Plugin, 0)?;
            let se = plugin_effect_std_error(data, estimand)?;
            Ok((est.tau_hat, se))
        }
        ModelSpec::MisspecifiedParsimonious => {
            let xs: Vec<f64> = data.units().iter().map(|u| u.a1 as f64).collect();
            let ys: Vec<f64> = data.units().iter().map(|u| u.y.as_numeric()).collect();
            let fit = fit_line(Some(&xs), &ys);
            if fit.rank_deficient {
                return Err(Error::Positivity { stratum: "(a1 degenerate)".into() });
            }
            let se = fit.slope_std_error.ok_or_else(|| {
                Error::InvalidInput("too few observations for a slope standard error".into())
            })?;
            Ok((fit.slope.unwrap(), se))
        }
    }
}
