//! Replication harness: runs estimators across DGP scenarios, computes
//! bias and MSE against the analytic target, and renders comparison
//! reports. Within a (scenario, replication) cell every estimator
//! consumes the identical dataset, so estimator comparisons are paired.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{naive_effect, BaselineKind};
use crate::dataset::EstimandSpec;
use crate::dgp::{simulate, true_effect, DgpConfig};
use crate::error::{Error, Result};
use crate::gformula::{estimate_effect, GMethod, McMode};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    GformulaPlugin,
    GformulaMc {
        #[serde(default = "crate::gformula::default_k")]
        k: usize,
    },
    Baseline { baseline: BaselineKind },
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::GformulaPlugin => "gformula-plugin".into(),
            EstimatorSpec::GformulaMc { .. } => "gformula-mc".into(),
            EstimatorSpec::Baseline { baseline } => format!("baseline:{}", baseline.as_str()),
        }
    }

    /// Parses the CLI method names.
    pub fn from_method_str(s: &str, k: usize) -> Result<Self> {
        match s {
            "gformula-plugin" => Ok(EstimatorSpec::GformulaPlugin),
            "gformula-mc" => Ok(EstimatorSpec::GformulaMc { k }),
            "baseline-ignore" => Ok(EstimatorSpec::Baseline { baseline: BaselineKind::IgnoreHistory }),
            "baseline-condition-l" => {
                Ok(EstimatorSpec::Baseline { baseline: BaselineKind::ConditionOnL })
            }
            "baseline-final-arm" => {
                Ok(EstimatorSpec::Baseline { baseline: BaselineKind::FinalArmTLearner })
            }
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

fn default_replications() -> usize {
    200
}

fn default_estimand() -> EstimandSpec {
    EstimandSpec::full_contrast()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenarios: Vec<DgpConfig>,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_estimand")]
    pub estimand: EstimandSpec,
    pub master_seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::InvalidConfig("scenarios must be non-empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("estimators must be non-empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: BenchConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub estimator: String,
    pub scenario: usize,
    pub delta: f64,
    pub eta: f64,
    /// Analytic true effect for the scenario.
    pub target: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mse: f64,
    pub replications: usize,
    pub failures: usize,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Per-replication estimates (NaN-free; failed replications are
    /// excluded and counted in `failures`), kept so bias/MSE are
    /// auditable without re-running.
    pub estimates: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchProvenance {
    pub master_seed: u64,
    pub config: BenchConfig,
    /// Dataset fingerprint per (scenario, replication) cell.
    pub fingerprints: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub provenance: BenchProvenance,
}

struct CellResult {
    fingerprint: u64,
    // per estimator: Ok(tau_hat) or recorded failure
    estimates: Vec<std::result::Result<f64, String>>,
}

/// Runs the full scenario x replication grid. Cells execute in parallel;
/// each derives its RNG stream from (master_seed, scenario, replication),
/// so the report is identical regardless of worker count.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut fingerprints = Vec::new();
    for (s_idx, scenario) in config.scenarios.iter().enumerate() {
        let target = true_effect(scenario, &config.estimand)?;
        let cells: Vec<CellResult> = (0..config.replications)
            .into_par_iter()
            .map(|rep| -> Result<CellResult> {
                let cell_seed = derive_seed(config.master_seed, &[s_idx as u64, rep as u64]);
                let cfg = DgpConfig { seed: cell_seed, ..scenario.clone() };
                let data = simulate(&cfg)?;
                let estimates = config
                    .estimators
                    .iter()
                    .enumerate()
                    .map(|(e_idx, est)| {
                        let est_seed = derive_seed(cell_seed, &[e_idx as u64]);
                        run_estimator(&data, est, &config.estimand, est_seed)
                            .map(|e| e)
                            .map_err(|e| e.to_string())
                    })
                    .collect();
                Ok(CellResult { fingerprint: data.fingerprint(), estimates })
            })
            .collect::<Result<_>>()?;
        fingerprints.push(cells.iter().map(|c| c.fingerprint).collect());
        for (e_idx, est) in config.estimators.iter().enumerate() {
            let estimates: Vec<f64> = cells
                .iter()
                .filter_map(|c| c.estimates[e_idx].as_ref().ok().copied())
                .collect();
            let failures = config.replications - estimates.len();
            let r = estimates.len().max(1) as f64;
            let mean = estimates.iter().sum::<f64>() / r;
            let mse = estimates.iter().map(|t| (t - target).powi(2)).sum::<f64>() / r;
            rows.push(BenchRow {
                estimator: est.label(),
                scenario: s_idx,
                delta: scenario.delta,
                eta: scenario.eta,
                target,
                mean_estimate: mean,
                bias: mean - target,
                mse,
                replications: config.replications,
                failures,
                n: scenario.n,
                k: match est {
                    EstimatorSpec::GformulaMc { k } => Some(*k),
                    _ => None,
                },
                estimates,
            });
        }
    }
    Ok(BenchReport {
        rows,
        provenance: BenchProvenance {
            master_seed: config.master_seed,
            config: config.clone(),
            fingerprints,
        },
    })
}

fn run_estimator(
    data: &crate::dataset::Dataset,
    est: &EstimatorSpec,
    estimand: &EstimandSpec,
    seed: u64,
) -> Result<f64> {
    let effect = match est {
        EstimatorSpec::GformulaPlugin => {
            estimate_effect(data, estimand, GMethod::Plugin, seed)?
        }
        EstimatorSpec::GformulaMc { k } => estimate_effect(
            data,
            estimand,
            GMethod::MonteCarlo { k: *k, mode: McMode::Mean },
            seed,
        )?,
        EstimatorSpec::Baseline { baseline } => naive_effect(data, *baseline, estimand)?,
    };
    Ok(effect.tau_hat)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

/// Renders a report. The text table mirrors the paper's layout: one block
/// per estimator with (delta, eta, MSE) rows. MSE is reported raw, not
/// scaled by 1000.
pub fn render_report(report: &BenchReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Csv => {
            let mut out = String::from(
                "estimator,scenario,delta,eta,target,mean_estimate,bias,mse,replications,failures,n,k\n",
            );
            for r in &report.rows {
                out.push_str(&format!(
                    "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}\n",
                    r.estimator,
                    r.scenario,
                    r.delta,
                    r.eta,
                    r.target,
                    r.mean_estimate,
                    r.bias,
                    r.mse,
                    r.replications,
                    r.failures,
                    r.n,
                    r.k.map(|k| k.to_string()).unwrap_or_default(),
                ));
            }
            Ok(out)
        }
        ReportFormat::Table => {
            let mut out = String::new();
            let mut estimators: Vec<&str> = Vec::new();
            for r in &report.rows {
                if !estimators.contains(&r.estimator.as_str()) {
                    estimators.push(r.estimator.as_str());
                }
            }
            for est in estimators {
                out.push_str(&format!("{est}\n"));
                out.push_str(&format!("{:>10} {:>10} {:>14}\n", "delta", "eta", "MSE"));
                for r in report.rows.iter().filter(|r| r.estimator == est) {
                    out.push_str(&format!("{:>10.3} {:>10.3} {:>14.6e}\n", r.delta, r.eta, r.mse));
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}
