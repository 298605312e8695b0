//! Two-sided sequential empirical copula processes on finite (s, t, u) grids.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::estimators::{empirical_copula, smooth_estimator, SmoothSpec};
use crate::models::CopulaModel;
use crate::ranks::{maximal_ranks, ObservationMatrix};
use crate::rng::stream_rng;

// Absorbs representation error in products like 100 * 0.29 before flooring.
const FLOOR_SLACK: f64 = 1e-9;

fn floor_count(n: usize, s: f64) -> usize {
    (n as f64 * s + FLOOR_SLACK).floor() as usize
}

fn check_pair(s: f64, t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("s and t must lie in [0, 1], got s={s}, t={t}")));
    }
    if s > t {
        return Err(Error::domain(format!("s must not exceed t, got s={s}, t={t}")));
    }
    Ok(())
}

/// `(floor(nt) - floor(ns)) / n`.
pub fn lambda_n(n: usize, s: f64, t: f64) -> Result<f64> {
    check_pair(s, t)?;
    if n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    Ok((floor_count(n, t) - floor_count(n, s)) as f64 / n as f64)
}

/// Grid over which the supremum is taken: all pairs `(s, t)` from the two
/// lists with `s <= t`, crossed with the `u` points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessGrid {
    pairs: Vec<(f64, f64)>,
    u_points: Vec<Vec<f64>>,
}

impl ProcessGrid {
    pub fn new(s_values: &[f64], t_values: &[f64], u_points: Vec<Vec<f64>>) -> Result<Self> {
        for values in [s_values, t_values] {
            if values.is_empty() {
                return Err(Error::param("s and t grids must be non-empty"));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param("s and t grids must be strictly increasing"));
            }
        }
        let mut pairs = Vec::new();
        for &s in s_values {
            for &t in t_values {
                if s <= t {
                    check_pair(s, t)?;
                    pairs.push((s, t));
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::param("grid has no pair with s <= t"));
        }
        let d = u_points.first().ok_or_else(|| Error::param("u grid must be non-empty"))?.len();
        if d == 0 {
            return Err(Error::param("u points must have at least one coordinate"));
        }
        for u in &u_points {
            check_dim(d, u.len())?;
            if u.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::domain("u points must lie in [0, 1]^d"));
            }
        }
        Ok(ProcessGrid { pairs, u_points })
    }

    /// s, t in {0, 0.1, ..., 1} and u on the lattice {0.1, 0.3, 0.5, 0.7, 0.9}^d.
    pub fn default_for(d: usize) -> Result<Self> {
        let st: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let levels = [0.1, 0.3, 0.5, 0.7, 0.9];
        let mut u_points = vec![vec![]];
        for _ in 0..d {
            u_points = u_points
                .into_iter()
                .flat_map(|p: Vec<f64>| {
                    levels.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        ProcessGrid::new(&st, &st, u_points)
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn u_points(&self) -> &[Vec<f64>] {
        &self.u_points
    }

    pub fn d(&self) -> usize {
        self.u_points[0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcessKind {
    Classical,
    /// The smoothed process; the dispersion is clamped to each window's length.
    Smooth(SmoothSpec),
}

/// Process values indexed by (pair, u point), pair-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessValues {
    pub u_count: usize,
    pub values: Vec<f64>,
}

impl ProcessValues {
    pub fn get(&self, pair: usize, u: usize) -> f64 {
        self.values[pair * self.u_count + u]
    }

    pub fn sup_distance(&self, other: &ProcessValues) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `sqrt(n) * lambda_n(s, t) * (C_hat(u) - C(u))` with the estimator computed
/// from the ranks of rows `floor(ns)+1 ..= floor(nt)`; 0 on empty windows.
pub fn process_values(
    sample: &ObservationMatrix,
    model: &CopulaModel,
    grid: &ProcessGrid,
    which: ProcessKind,
) -> Result<ProcessValues> {
    check_dim(model.d(), sample.d())?;
    check_dim(model.d(), grid.d())?;
    let n = sample.n();
    if n == 0 {
        return Err(Error::param("sample is empty"));
    }
    let truth: Vec<f64> = grid.u_points.iter().map(|u| model.cdf(u)).collect::<Result<_>>()?;
    let sqrt_n = (n as f64).sqrt();
    let mut values = Vec::with_capacity(grid.pairs.len() * grid.u_points.len());
    for &(s, t) in &grid.pairs {
        let (lo, hi) = (floor_count(n, s), floor_count(n, t));
        if lo == hi {
            values.extend(std::iter::repeat_n(0.0, grid.u_points.len()));
            continue;
        }
        let scale = sqrt_n * (hi - lo) as f64 / n as f64;
        let ranks = maximal_ranks(sample, (lo + 1, hi))?;
        let spec = match which {
            ProcessKind::Smooth(spec) => Some(spec.clamped(ranks.m()).0),
            ProcessKind::Classical => None,
        };
        for (u, c) in grid.u_points.iter().zip(&truth) {
            let estimate = match &spec {
                Some(spec) => smooth_estimator(&ranks, spec, u)?,
                None => empirical_copula(&ranks, u)?,
            };
            values.push(scale * (estimate - c));
        }
    }
    Ok(ProcessValues { u_count: grid.u_points.len(), values })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EquivalenceRow {
    pub n: usize,
    pub median_sup: f64,
    pub q25: f64,
    pub q75: f64,
    /// Large-sample standard error of the median, from the interquartile range.
    pub median_se: f64,
}

// Linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// For each `n`, the distribution over replications of `sup |C_n^nu - C_n|` on the grid.
/// Replication `r` at the `i`-th sample size uses stream `(i << 32) | r`.
pub fn equivalence_check(
    model: &CopulaModel,
    spec: SmoothSpec,
    n_values: &[usize],
    reps: usize,
    grid: &ProcessGrid,
    seed: u64,
) -> Result<Vec<EquivalenceRow>> {
    if reps < 20 {
        return Err(Error::param(format!("at least 20 replications are needed, got {reps}")));
    }
    if n_values.is_empty() || n_values[0] == 0 || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("sample sizes must be positive and strictly increasing"));
    }
    if let crate::estimators::SurvivalCopula::Fixed(m) = &spec.survival_copula {
        check_dim(model.d(), m.d())?;
    }
    n_values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let sups: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| -> Result<f64> {
                    let mut rng = stream_rng(seed, ((i as u64) << 32) | r as u64);
                    let sample = model.sample_with(&mut rng, n)?;
                    let classical = process_values(&sample, model, grid, ProcessKind::Classical)?;
                    let smooth = process_values(&sample, model, grid, ProcessKind::Smooth(spec))?;
                    Ok(smooth.sup_distance(&classical))
                })
                .collect::<Result<_>>()?;
            let mut sorted = sups;
            sorted.sort_by(f64::total_cmp);
            let q25 = quantile_sorted(&sorted, 0.25);
            let q75 = quantile_sorted(&sorted, 0.75);
            // sd of a normal is IQR / 1.349; the median's variance is (pi / 2) sd^2 / reps.
            let median_se = (std::f64::consts::PI / 2.0).sqrt() * (q75 - q25) / 1.349 / (reps as f64).sqrt();
            Ok(EquivalenceRow { n, median_sup: quantile_sorted(&sorted, 0.5), q25, q75, median_se })
        })
        .collect()
}
