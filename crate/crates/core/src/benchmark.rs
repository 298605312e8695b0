//! Monte Carlo estimates of integrated squared bias, integrated variance and
//! integrated mean squared error of copula estimators.
//!
//! All estimators of one experiment are evaluated on the same replicated
//! samples (common random numbers) and at the same Sobol integration nodes.
//! Replication `r` draws its sample from stream `r` of the experiment seed,
//! and per-replication results are reduced in replication order, so reports
//! do not depend on the number of threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, PreparedPoint};
use crate::models::{CopulaFamily, CopulaModel};
use crate::qmc::sobol_points;
use crate::ranks::{maximal_ranks, RankMatrix};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: CopulaModel,
    pub n: usize,
    pub reps: usize,
    /// Number `M` of integration nodes.
    pub nodes: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::param(format!("at least 2 replications are needed, got {}", self.reps)));
        }
        if self.nodes == 0 {
            return Err(Error::param("at least one integration node is needed"));
        }
        if self.n == 0 {
            return Err(Error::param("sample size must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::param("no estimators to compare"));
        }
        for kind in &self.estimators {
            kind.validate(self.n, self.model.d())?;
        }
        Ok(())
    }
}

/// Performance of one estimator. Standard errors are jackknife estimates over replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorPerformance {
    pub estimator: String,
    /// Integrated squared bias, clamped at 0.
    pub isb: f64,
    /// The unclamped squared-bias estimate; `imse = isb_unclamped + ivar` holds exactly.
    pub isb_unclamped: f64,
    pub ivar: f64,
    pub imse: f64,
    pub se_isb: f64,
    pub se_ivar: f64,
    pub se_imse: f64,
    /// Per-replication integrated squared errors, in replication order.
    #[serde(skip)]
    pub rep_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceReport {
    pub model: String,
    pub n: usize,
    pub reps: usize,
    pub nodes: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorPerformance>,
}

impl PerformanceReport {
    /// `IMSE(a) - IMSE(b)` with its paired standard error, which accounts for
    /// the common random numbers shared by both estimators.
    pub fn imse_difference(&self, a: usize, b: usize) -> (f64, f64) {
        let ea = &self.estimators[a].rep_errors;
        let eb = &self.estimators[b].rep_errors;
        let diffs: Vec<f64> = ea.iter().zip(eb).map(|(x, y)| x - y).collect();
        let (mean, sd) = mean_sd(&diffs);
        (mean, sd / (diffs.len() as f64).sqrt())
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn jackknife_se(leave_one_out: &[f64]) -> f64 {
    let r = leave_one_out.len() as f64;
    let mean = leave_one_out.iter().sum::<f64>() / r;
    ((r - 1.0) / r * leave_one_out.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Reduces the values `x[k][r]` of one estimator (node `k`, replication `r`).
fn summarize(label: String, values: &[Vec<f64>], truth: &[f64]) -> EstimatorPerformance {
    let m = truth.len();
    let reps = values[0].len();
    let rf = reps as f64;
    let mf = m as f64;
    // Deviations d = x - C; per-node sums S_k and sums of squares Q_k.
    let mut s = vec![0.0; m];
    let mut q = vec![0.0; m];
    let mut rep_errors = vec![0.0; reps];
    for k in 0..m {
        for r in 0..reps {
            let d = values[k][r] - truth[k];
            s[k] += d;
            q[k] += d * d;
            rep_errors[r] += d * d;
        }
    }
    rep_errors.iter_mut().for_each(|e| *e /= mf);
    // Per node, the squared bias U_k = (S^2 - Q) / (R (R - 1)) equals (mean - C)^2 minus
    // the sample variance over R, and V_k = (Q - S^2 / R) / (R - 1) is the sample variance.
    let squared_bias = |s: f64, q: f64, r: f64| (s * s - q) / (r * (r - 1.0));
    let variance = |s: f64, q: f64, r: f64| (q - s * s / r) / (r - 1.0);
    let isb_unclamped = (0..m).map(|k| squared_bias(s[k], q[k], rf)).sum::<f64>() / mf;
    let ivar = (0..m).map(|k| variance(s[k], q[k], rf)).sum::<f64>() / mf;
    let imse = rep_errors.iter().sum::<f64>() / rf;

    let (se_isb, se_ivar) = if reps >= 3 {
        let mut loo_isb = vec![0.0; reps];
        let mut loo_ivar = vec![0.0; reps];
        for k in 0..m {
            for r in 0..reps {
                let d = values[k][r] - truth[k];
                loo_isb[r] += squared_bias(s[k] - d, q[k] - d * d, rf - 1.0);
                loo_ivar[r] += variance(s[k] - d, q[k] - d * d, rf - 1.0);
            }
        }
        loo_isb.iter_mut().chain(loo_ivar.iter_mut()).for_each(|v| *v /= mf);
        (jackknife_se(&loo_isb), jackknife_se(&loo_ivar))
    } else {
        (f64::NAN, f64::NAN)
    };
    let se_imse = mean_sd(&rep_errors).1 / rf.sqrt();
    EstimatorPerformance {
        estimator: label,
        isb: isb_unclamped.max(0.0),
        isb_unclamped,
        ivar,
        imse,
        se_isb,
        se_ivar,
        se_imse,
        rep_errors,
    }
}

/// Runs the replications of one experiment and integrates the three measures over the nodes.
pub fn run_experiment(config: &ExperimentConfig) -> Result<PerformanceReport> {
    config.validate()?;
    let d = config.model.d();
    let nodes = sobol_points(d, config.nodes)?;
    let truth: Vec<f64> = nodes.iter().map(|u| config.model.cdf(u)).collect::<Result<_>>()?;

    let ranks: Vec<RankMatrix> = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, r as u64);
            let sample = config.model.sample_with(&mut rng, config.n)?;
            maximal_ranks(&sample, (1, config.n))
        })
        .collect::<Result<_>>()?;

    // The estimator factors at a node do not depend on the sample, so each node is
    // prepared once and applied to every replication. values[k][e][r]
    let values: Vec<Vec<Vec<f64>>> = nodes
        .par_iter()
        .map(|u| {
            config
                .estimators
                .iter()
                .map(|kind| {
                    let point = PreparedPoint::new(kind, config.n, u)?;
                    ranks.iter().map(|r| point.evaluate(r)).collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let estimators = config
        .estimators
        .iter()
        .enumerate()
        .map(|(e, kind)| {
            let per_node: Vec<Vec<f64>> = values.iter().map(|node| node[e].clone()).collect();
            summarize(kind.to_string(), &per_node, &truth)
        })
        .collect();
    Ok(PerformanceReport {
        model: config.model.to_string(),
        n: config.n,
        reps: config.reps,
        nodes: config.nodes,
        seed: config.seed,
        estimators,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Tau,
    N,
    Rho,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tau" => Ok(SweepAxis::Tau),
            "n" => Ok(SweepAxis::N),
            "rho" => Ok(SweepAxis::Rho),
            other => Err(Error::parse(format!("unknown sweep axis '{other}' (expected tau, n or rho)"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Tau => "tau",
            SweepAxis::N => "n",
            SweepAxis::Rho => "rho",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: f64,
    pub estimator: String,
    pub isb: f64,
    pub ivar: f64,
    pub imse: f64,
    pub se_isb: f64,
    pub se_ivar: f64,
    pub se_imse: f64,
    /// `100 * IMSE / IMSE(reference)` within the same configuration.
    pub relative_efficiency: f64,
}

fn axis_value(config: &ExperimentConfig, axis: SweepAxis) -> Result<f64> {
    match axis {
        SweepAxis::N => Ok(config.n as f64),
        SweepAxis::Tau => config
            .model
            .tau()
            .ok_or_else(|| Error::param(format!("model {} has no closed-form Kendall's tau", config.model))),
        SweepAxis::Rho => {
            let mut rhos = config.estimators.iter().filter_map(|k| match k {
                EstimatorKind::Smooth(spec) => spec.margin.rho(),
                _ => None,
            });
            let first = rhos.next().ok_or_else(|| Error::param("rho sweep needs an estimator with a rho"))?;
            if rhos.all(|r| r == first) {
                Ok(first)
            } else {
                Err(Error::param("rho sweep needs a single rho per configuration"))
            }
        }
    }
}

// The configuration with the swept attribute blanked out, for consistency checks.
fn without_axis(config: &ExperimentConfig, axis: SweepAxis) -> (String, usize, Vec<String>) {
    let model = match axis {
        // Families are compared separately: tau = 0 turns any family into independence.
        SweepAxis::Tau => format!("d={}", config.model.d()),
        _ => config.model.to_string(),
    };
    let n = if axis == SweepAxis::N { 0 } else { config.n };
    let estimators = config
        .estimators
        .iter()
        .map(|k| {
            let label = k.to_string();
            if axis == SweepAxis::Rho {
                label.split(':').filter(|p| !p.starts_with("rho=")).collect::<Vec<_>>().join(":")
            } else {
                label
            }
        })
        .collect();
    (model, n, estimators)
}

/// Runs every configuration and returns one row per (axis value, estimator), in
/// input order. Relative efficiencies use estimator `reference` of each configuration.
pub fn sweep(configs: &[ExperimentConfig], axis: SweepAxis, reference: usize) -> Result<Vec<SweepRow>> {
    let first = configs.first().ok_or_else(|| Error::param("sweep needs at least one configuration"))?;
    if reference >= first.estimators.len() {
        return Err(Error::param(format!("reference index {reference} is out of range")));
    }
    let shape = without_axis(first, axis);
    for c in configs {
        if without_axis(c, axis) != shape || (c.reps, c.nodes, c.seed) != (first.reps, first.nodes, first.seed) {
            return Err(Error::param(format!("configurations differ in more than the swept axis '{axis}'")));
        }
    }
    if axis == SweepAxis::Tau {
        let mut families = configs.iter().map(|c| c.model.family()).filter(|f| *f != CopulaFamily::Independence);
        if let Some(first) = families.next() {
            if families.any(|f| f != first) {
                return Err(Error::param("tau sweep mixes copula families"));
            }
        }
    }
    let mut rows = Vec::new();
    for config in configs {
        let value = axis_value(config, axis)?;
        let report = run_experiment(config)?;
        let reference_imse = report.estimators[reference].imse;
        for perf in report.estimators {
            rows.push(SweepRow {
                axis: value,
                relative_efficiency: 100.0 * perf.imse / reference_imse,
                estimator: perf.estimator,
                isb: perf.isb,
                ivar: perf.ivar,
                imse: perf.imse,
                se_isb: perf.se_isb,
                se_ivar: perf.se_ivar,
                se_imse: perf.se_imse,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_identities_on_known_values() {
        // Two nodes, three replications.
        let values = vec![vec![0.1, 0.3, 0.2], vec![0.5, 0.4, 0.9]];
        let truth = vec![0.2, 0.5];
        let p = summarize("x".into(), &values, &truth);
        // Node 1: mean 0.2 (no bias), variance 0.01. Node 2: mean 0.6, variance 0.07.
        assert!((p.ivar - 0.04).abs() < 1e-15);
        let isb_node2 = 0.01 - 0.07 / 3.0;
        let isb_node1 = 0.0 - 0.01 / 3.0;
        assert!((p.isb_unclamped - 0.5 * (isb_node1 + isb_node2)).abs() < 1e-15);
        assert_eq!(p.isb, 0.0);
        assert!((p.imse - (p.isb_unclamped + p.ivar)).abs() < 1e-15);
        let direct_mse =
            values.iter().zip(&truth).flat_map(|(node, c)| node.iter().map(move |x| (x - c) * (x - c))).sum::<f64>()
                / 6.0;
        assert!((p.imse - direct_mse).abs() < 1e-15);
    }

    #[test]
    fn jackknife_of_a_mean_is_the_usual_standard_error() {
        let values = vec![vec![0.3, 0.1, 0.7, 0.4, 0.2]];
        let p = summarize("x".into(), &values, &[0.0]);
        // imse is a plain mean of squared deviations; compare its standard error with the textbook one.
        let errs: Vec<f64> = values[0].iter().map(|x| x * x).collect();
        let (_, sd) = mean_sd(&errs);
        assert!((p.se_imse - sd / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let base = ExperimentConfig {
            model: CopulaModel::independence(2).unwrap(),
            n: 10,
            reps: 2,
            nodes: 8,
            estimators: vec![EstimatorKind::EmpiricalBeta],
            seed: 1,
        };
        assert!(base.validate().is_ok());
        assert!(ExperimentConfig { reps: 1, ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { nodes: 0, ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { estimators: vec![], ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { estimators: vec!["beta-binomial:rho=12".parse().unwrap()], ..base }
            .validate()
            .is_err());
    }
}
