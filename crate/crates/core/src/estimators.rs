//! Empirical, empirical beta and smooth copula estimators on a window's ranks.
//!
//! The smooth estimators are evaluated in closed form as
//! `(1/m) sum_i C̄(F̄_1(a_i1), ..., F̄_d(a_id))`, where `F̄_j` is the smoothing
//! survival margin at `u_j` and `C̄` the survival copula of the smoothing law.
//! [`mixture_oracle`] evaluates the same quantity by sampling the smoothing
//! law and averaging the empirical copula, and serves as a brute-force check.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::margins::{survival_at_ranks_from_law, MarginFamily, MarginLaw};
use crate::models::CopulaModel;
use crate::numerics::{binomial_pmf, inv_reg_inc_beta, reg_inc_beta, upper_tails, ShapePair};
use crate::ranks::{maximal_ranks, ObservationMatrix, RankMatrix};
use crate::rng::{open01, stream_rng};

/// Survival copula of the smoothing distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurvivalCopula {
    Independence,
    /// The empirical beta copula of the same window.
    EmpiricalBetaPilot,
    Fixed(CopulaModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothSpec {
    pub margin: MarginFamily,
    pub survival_copula: SurvivalCopula,
}

impl SmoothSpec {
    pub fn new(margin: MarginFamily, survival_copula: SurvivalCopula) -> Self {
        SmoothSpec { margin, survival_copula }
    }

    /// Checks the dispersion against the window length and a fixed model's dimension.
    pub fn validate(&self, m: usize, d: usize) -> Result<()> {
        self.margin.validate(m)?;
        if let SurvivalCopula::Fixed(model) = &self.survival_copula {
            check_dim(d, model.d())?;
        }
        Ok(())
    }

    /// Same spec with the dispersion clamped for window length `m`.
    pub fn clamped(&self, m: usize) -> (SmoothSpec, bool) {
        let (margin, changed) = self.margin.clamped(m);
        (SmoothSpec { margin, ..*self }, changed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Empirical,
    EmpiricalBeta,
    Smooth(SmoothSpec),
}

impl EstimatorKind {
    pub fn validate(&self, m: usize, d: usize) -> Result<()> {
        match self {
            EstimatorKind::Smooth(spec) => spec.validate(m, d),
            _ => Ok(()),
        }
    }

    /// Same estimator with any dispersion clamped for window length `m`.
    pub fn clamped(&self, m: usize) -> (EstimatorKind, bool) {
        match self {
            EstimatorKind::Smooth(spec) => {
                let (spec, changed) = spec.clamped(m);
                (EstimatorKind::Smooth(spec), changed)
            }
            other => (*other, false),
        }
    }
}

/// An estimator bound to the ranks of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    ranks: RankMatrix,
    kind: EstimatorKind,
}

impl Estimator {
    pub fn new(ranks: RankMatrix, kind: EstimatorKind) -> Result<Self> {
        kind.validate(ranks.m(), ranks.d())?;
        Ok(Estimator { ranks, kind })
    }

    /// Estimator on the whole sample.
    pub fn from_sample(sample: &ObservationMatrix, kind: EstimatorKind) -> Result<Self> {
        Self::new(maximal_ranks(sample, (1, sample.n()))?, kind)
    }

    pub fn ranks(&self) -> &RankMatrix {
        &self.ranks
    }

    pub fn kind(&self) -> &EstimatorKind {
        &self.kind
    }

    pub fn ties_present(&self) -> bool {
        self.ranks.has_ties()
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<f64> {
        match &self.kind {
            EstimatorKind::Empirical => empirical_copula(&self.ranks, u),
            EstimatorKind::EmpiricalBeta => empirical_beta_copula(&self.ranks, u),
            EstimatorKind::Smooth(spec) => smooth_estimator(&self.ranks, spec, u),
        }
    }
}

fn check_point(d: usize, u: &[f64]) -> Result<()> {
    check_dim(d, u.len())?;
    match u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        Some(bad) => Err(Error::domain(format!("evaluation point must lie in [0, 1]^d, got coordinate {bad}"))),
        None => Ok(()),
    }
}

/// `(1/m) sum_i prod_j 1(R_ij / m <= u_j)`.
pub fn empirical_copula(ranks: &RankMatrix, u: &[f64]) -> Result<f64> {
    PreparedPoint::new(&EstimatorKind::Empirical, ranks.m(), u)?.evaluate(ranks)
}

/// `(1/m) sum_i prod_j I_{u_j}(R_ij, m + 1 - R_ij)`, the empirical beta copula.
pub fn empirical_beta_copula(ranks: &RankMatrix, u: &[f64]) -> Result<f64> {
    PreparedPoint::new(&EstimatorKind::EmpiricalBeta, ranks.m(), u)?.evaluate(ranks)
}

/// The smooth estimator `(1/m) sum_i C̄(F̄_{1,u_1}(a_i1), ..., F̄_{d,u_d}(a_id))` with
/// `a_ij = R_ij - 1` for the discrete margins and `a_ij = (R_ij - 1/2)/m` for beta margins.
pub fn smooth_estimator(ranks: &RankMatrix, spec: &SmoothSpec, u: &[f64]) -> Result<f64> {
    check_dim(ranks.d(), u.len())?;
    PreparedPoint::new(&EstimatorKind::Smooth(*spec), ranks.m(), u)?.evaluate(ranks)
}

/// An estimator at a fixed point `u` for windows of length `m`, with every
/// rank-indexed factor precomputed. The factors depend on a sample only through
/// rank values in `1..=m`, so one preparation serves any number of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPoint {
    m: usize,
    d: usize,
    form: Form,
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    /// Largest rank `r` with `r / m <= u_j`, per coordinate.
    Indicator(Vec<u32>),
    /// `factors[j][r - 1]`; the value is the mean over observations of the product.
    Product { factors: Vec<Vec<f64>>, clamp: bool },
    /// Survival vectors `survival[j][r - 1]` fed to a parametric survival copula.
    Fixed(CopulaModel, Vec<Vec<f64>>),
    /// `tables[j][(a - 1) * m + r - 1] = I_v(r, m + 1 - r)` at `v = F̄_j(a_a)`.
    Pilot(Vec<Vec<f64>>),
}

impl PreparedPoint {
    pub fn new(kind: &EstimatorKind, m: usize, u: &[f64]) -> Result<Self> {
        let d = u.len();
        if m == 0 {
            return Err(Error::param("window length must be at least 1"));
        }
        check_point(d, u)?;
        kind.validate(m, d)?;
        let form = match kind {
            EstimatorKind::Empirical => Form::Indicator(
                u.iter().map(|&uj| (1..=m).take_while(|&r| r as f64 / m as f64 <= uj).count() as u32).collect(),
            ),
            EstimatorKind::EmpiricalBeta => {
                let factors = u
                    .iter()
                    .map(|&uj| {
                        (1..=m)
                            .map(|r| reg_inc_beta(uj, ShapePair::new(r as f64, (m + 1 - r) as f64)?))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<_>>()?;
                Form::Product { factors, clamp: false }
            }
            EstimatorKind::Smooth(spec) => {
                // survival[j][r - 1] = F̄_{j,u_j}(a_r), shared by every observation with rank r.
                let survival: Vec<Vec<f64>> = u
                    .iter()
                    .map(|&uj| Ok(survival_at_ranks_from_law(&spec.margin.law(m, uj)?, m)))
                    .collect::<Result<_>>()?;
                match &spec.survival_copula {
                    SurvivalCopula::Independence => Form::Product { factors: survival, clamp: true },
                    SurvivalCopula::Fixed(model) => Form::Fixed(*model, survival),
                    SurvivalCopula::EmpiricalBetaPilot => Form::Pilot(pilot_tables(m, &survival)?),
                }
            }
        };
        Ok(PreparedPoint { m, d, form })
    }

    pub fn evaluate(&self, ranks: &RankMatrix) -> Result<f64> {
        check_dim(self.d, ranks.d())?;
        if ranks.m() != self.m {
            return Err(Error::param(format!("prepared for windows of length {}, got {}", self.m, ranks.m())));
        }
        let m = self.m as f64;
        Ok(match &self.form {
            Form::Indicator(max_rank) => {
                ranks.rows().filter(|row| row.iter().zip(max_rank).all(|(r, top)| r <= top)).count() as f64 / m
            }
            Form::Product { factors, clamp } => {
                let value = mean_of_products(ranks, factors);
                if *clamp {
                    value.clamp(0.0, 1.0)
                } else {
                    value
                }
            }
            Form::Fixed(model, survival) => {
                let mut point = vec![0.0; self.d];
                let sum: f64 = ranks
                    .rows()
                    .map(|row| {
                        for (j, &r) in row.iter().enumerate() {
                            point[j] = survival[j][r as usize - 1];
                        }
                        model.cdf_unchecked(&point)
                    })
                    .sum();
                (sum / m).clamp(0.0, 1.0)
            }
            Form::Pilot(tables) => pilot_value(ranks, tables).clamp(0.0, 1.0),
        })
    }
}

fn mean_of_products(ranks: &RankMatrix, factors: &[Vec<f64>]) -> f64 {
    let sum: f64 =
        ranks.rows().map(|row| row.iter().enumerate().map(|(j, &r)| factors[j][r as usize - 1]).product::<f64>()).sum();
    sum / ranks.m() as f64
}

/// Per coordinate, the table of `I_v(r, m + 1 - r)` at every `v = F̄_j(a_a)`. By the
/// binomial/beta duality `I_v(r, m + 1 - r) = Pr(Bin(m, v) >= r)`, one binomial tail
/// vector per distinct rank `a` fills a row.
fn pilot_tables(m: usize, survival: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    survival
        .iter()
        .map(|s| {
            let mut table = vec![0.0; m * m];
            for (a, &v) in s.iter().enumerate() {
                let tails = upper_tails(&binomial_pmf(m, v)?);
                table[a * m..(a + 1) * m].copy_from_slice(&tails[1..=m]);
            }
            Ok(table)
        })
        .collect()
}

/// `(1/m^2) sum_i sum_l prod_j I_{F̄_j(a_ij)}(R_lj, m + 1 - R_lj)`: the survival
/// copula is the empirical beta copula of the same ranks.
fn pilot_value(ranks: &RankMatrix, tables: &[Vec<f64>]) -> f64 {
    let m = ranks.m();
    let mut total = 0.0;
    for row_i in ranks.rows() {
        let mut inner = 0.0;
        for row_l in ranks.rows() {
            let mut prod = 1.0;
            for (j, table) in tables.iter().enumerate() {
                prod *= table[(row_i[j] as usize - 1) * m + row_l[j] as usize - 1];
            }
            inner += prod;
        }
        total += inner;
    }
    total / (m * m) as f64
}

/// Monte Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub value: f64,
    pub std_error: f64,
}

const ORACLE_BATCH: usize = 1 << 16;

/// Estimates the smooth estimator at `u` by simulation: draw `W` from the smoothing
/// law (survival copula `C̄` with survival margins `F̄_{j,u_j}`) and average the
/// empirical copula kernel `(1/m) sum_i prod_j 1(a_ij <= W_j)`, where
/// `a_ij = R_ij/m`, or `(R_ij - 1/2)/m` for beta margins.
///
/// A draw `V` from `C̄` becomes `W_j = F_j^{-1}(1 - V_j)`, so that
/// `Pr(W > w) = C̄(F̄(w))`. The pilot copula is sampled as a mixture: pick an
/// observation `I` uniformly, then `V_j ~ Beta(R_Ij, m + 1 - R_Ij)`.
/// Draws are split into fixed batches on separate streams of `seed`.
pub fn mixture_oracle(
    ranks: &RankMatrix,
    spec: &SmoothSpec,
    u: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    check_point(ranks.d(), u)?;
    spec.validate(ranks.m(), ranks.d())?;
    if mc_samples == 0 {
        return Err(Error::param("mc_samples must be at least 1"));
    }
    let m = ranks.m();
    let d = ranks.d();
    let laws: Vec<MarginLaw> = u.iter().map(|&uj| spec.margin.law(m, uj)).collect::<Result<_>>()?;
    let shift = if spec.margin.is_discrete() { 0.0 } else { 0.5 };
    let thresholds: Vec<f64> = ranks.rows().flatten().map(|&r| (r as f64 - shift) / m as f64).collect();

    let batches = mc_samples.div_ceil(ORACLE_BATCH);
    let partials: Vec<(f64, f64)> = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<(f64, f64)> {
            let mut rng = stream_rng(seed, b as u64);
            let count = ORACLE_BATCH.min(mc_samples - b * ORACLE_BATCH);
            let mut v = vec![0.0; d];
            let mut w = vec![0.0; d];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                match &spec.survival_copula {
                    SurvivalCopula::Independence => v.iter_mut().for_each(|x| *x = open01(&mut rng)),
                    SurvivalCopula::Fixed(model) => model.draw(&mut rng, &mut v),
                    SurvivalCopula::EmpiricalBetaPilot => {
                        let uniforms: Vec<f64> = (0..d).map(|_| open01(&mut rng)).collect();
                        let i = ((m as f64 * open01(&mut rng)) as usize).min(m - 1);
                        for j in 0..d {
                            let r = ranks.get(i, j) as f64;
                            v[j] = inv_reg_inc_beta(uniforms[j], ShapePair::new(r, m as f64 + 1.0 - r)?)?;
                        }
                    }
                }
                for j in 0..d {
                    w[j] = laws[j].quantile(1.0 - v[j])?;
                }
                let hits = thresholds.chunks_exact(d).filter(|a| a.iter().zip(&w).all(|(aj, wj)| aj <= wj)).count();
                let kernel = hits as f64 / m as f64;
                sum += kernel;
                sum_sq += kernel * kernel;
            }
            Ok((sum, sum_sq))
        })
        .collect::<Result<_>>()?;
    let (sum, sum_sq) = partials.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = mc_samples as f64;
    let mean = sum / n;
    let variance = if mc_samples > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(OracleEstimate { value: mean, std_error: (variance / n).sqrt() })
}

/// Largest deviation from uniform margins,
/// `max_j max_k |C(u^(j)) - u_j|` over `u_j` in `{0, 1/(G-1), ..., 1}`, where
/// `u^(j)` has every coordinate equal to 1 except the `j`-th.
pub fn margin_defect(estimator: &Estimator, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::param("grid_size must be at least 2"));
    }
    let d = estimator.ranks().d();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        for k in 0..grid_size {
            let x = k as f64 / (grid_size - 1) as f64;
            let mut u = vec![1.0; d];
            u[j] = x;
            worst = worst.max((estimator.evaluate(&u)? - x).abs());
        }
    }
    Ok(worst)
}

fn fmt_margin(f: &mut fmt::Formatter<'_>, margin: &MarginFamily) -> fmt::Result {
    match margin {
        MarginFamily::ScaledBinomial => write!(f, "binomial"),
        MarginFamily::ScaledBetaBinomial { rho } => write!(f, "beta-binomial:rho={rho}"),
        MarginFamily::Beta { rho } => write!(f, "beta:rho={rho}"),
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Empirical => write!(f, "ecdf"),
            EstimatorKind::EmpiricalBeta => write!(f, "ebc"),
            EstimatorKind::Smooth(spec) => {
                fmt_margin(f, &spec.margin)?;
                match &spec.survival_copula {
                    SurvivalCopula::Independence => write!(f, ":pilot=indep"),
                    SurvivalCopula::EmpiricalBetaPilot => write!(f, ":pilot=ebc"),
                    SurvivalCopula::Fixed(model) => write!(f, ":fixed-pilot={model}"),
                }
            }
        }
    }
}

/// Grammar: `ecdf`, `ebc`, or `<margin>[:rho=<r>][:pilot=<indep|ebc>]` with margin
/// `binomial`, `beta-binomial` or `beta`, where a trailing `fixed-pilot=<model>`
/// (model grammar of [`CopulaModel`]) may replace the `pilot` field. A bare
/// `fixed-pilot=<model>` uses binomial margins. The pilot defaults to `indep`.
impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "ecdf" => return Ok(EstimatorKind::Empirical),
            "ebc" => return Ok(EstimatorKind::EmpiricalBeta),
            _ => {}
        }
        let (head, fixed) = match s.find("fixed-pilot=") {
            Some(pos) => {
                let model: CopulaModel = s[pos + "fixed-pilot=".len()..].parse()?;
                (s[..pos].trim_end_matches(':'), Some(model))
            }
            None => (s, None),
        };
        let mut parts = head.split(':').filter(|p| !p.is_empty());
        let name = if head.is_empty() && fixed.is_some() { "binomial" } else { parts.next().unwrap_or_default() };
        let (mut rho, mut pilot) = (None, None);
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("expected key=value, got '{part}' in '{s}'")))?;
            match key {
                "rho" => {
                    let r: f64 = value.parse().map_err(|_| Error::parse(format!("invalid rho '{value}'")))?;
                    if rho.replace(r).is_some() {
                        return Err(Error::parse("rho given twice"));
                    }
                }
                "pilot" => {
                    let p = match value {
                        "indep" | "independence" | "pi" => SurvivalCopula::Independence,
                        "ebc" => SurvivalCopula::EmpiricalBetaPilot,
                        other => return Err(Error::parse(format!("unknown pilot '{other}'"))),
                    };
                    if pilot.replace(p).is_some() {
                        return Err(Error::parse("pilot given twice"));
                    }
                }
                other => return Err(Error::parse(format!("unknown estimator key '{other}' in '{s}'"))),
            }
        }
        let survival_copula = match (pilot, fixed) {
            (Some(_), Some(_)) => return Err(Error::parse("give either pilot or fixed-pilot, not both")),
            (Some(p), None) => p,
            (None, Some(model)) => SurvivalCopula::Fixed(model),
            (None, None) => SurvivalCopula::Independence,
        };
        let need_rho = || rho.ok_or_else(|| Error::parse(format!("'{name}' margins need rho in '{s}'")));
        let margin = match name {
            "binomial" => {
                if rho.is_some() {
                    return Err(Error::parse("binomial margins take no rho"));
                }
                MarginFamily::ScaledBinomial
            }
            "beta-binomial" | "betabinomial" => MarginFamily::ScaledBetaBinomial { rho: need_rho()? },
            "beta" => MarginFamily::Beta { rho: need_rho()? },
            other => return Err(Error::parse(format!("unknown estimator '{other}' in '{s}'"))),
        };
        if let Some(r) = margin.rho() {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::parse(format!("rho must be positive, got {r}")));
            }
        }
        Ok(EstimatorKind::Smooth(SmoothSpec { margin, survival_copula }))
    }
}
