//! Smoothing margin families `t -> F̄_t(w)`.
//!
//! Each family is a law on `[0, 1]` with mean `t`: a binomial count scaled by
//! `1/n`, a beta-binomial count scaled by `1/n`, or a beta variable. The
//! dispersion `rho` sets `Var(W) = rho * t(1-t)/n` for the last two.
//!
//! For the discrete families the survival function takes a count threshold
//! `k` and returns `Pr(S > k)`; for the beta family it takes `w` in `[0, 1]`.

use crate::error::{Error, Result};
use crate::numerics::{
    beta_binomial_ln_pmf_vec, beta_binomial_pmf, beta_binomial_survival_gt, beta_survival, binomial_pmf,
    binomial_survival_gt, inv_reg_inc_beta, ln_reg_inc_beta_tails, log_sum_exp, upper_tails, ShapePair,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginFamily {
    ScaledBinomial,
    /// Requires `1 < rho < n`.
    ScaledBetaBinomial {
        rho: f64,
    },
    /// Requires `0 < rho < n`.
    Beta {
        rho: f64,
    },
}

impl MarginFamily {
    pub fn rho(&self) -> Option<f64> {
        match *self {
            MarginFamily::ScaledBinomial => None,
            MarginFamily::ScaledBetaBinomial { rho } | MarginFamily::Beta { rho } => Some(rho),
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, MarginFamily::Beta { .. })
    }

    /// Checks the dispersion parameter against the sample size `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::param("margin size must be at least 1"));
        }
        let nf = n as f64;
        match *self {
            MarginFamily::ScaledBinomial => Ok(()),
            MarginFamily::ScaledBetaBinomial { rho } if rho > 1.0 && rho < nf => Ok(()),
            MarginFamily::ScaledBetaBinomial { rho } => {
                Err(Error::param(format!("beta-binomial rho must lie in (1, {n}), got {rho}")))
            }
            MarginFamily::Beta { rho } if rho > 0.0 && rho < nf => Ok(()),
            MarginFamily::Beta { rho } => Err(Error::param(format!("beta rho must lie in (0, {n}), got {rho}"))),
        }
    }

    /// Brings a too-large `rho` back inside the admissible interval for size `n`.
    ///
    /// Returns the family to use and whether it differs from `self`. A request
    /// `rho >= n` becomes `max(n - 1, (lower + n) / 2)`, where `lower` is the
    /// left end of the interval; a beta-binomial at `n = 1` has no admissible
    /// `rho` and falls back to the binomial law. A `rho` at or below the lower
    /// end is left alone and will fail validation.
    pub fn clamped(&self, n: usize) -> (MarginFamily, bool) {
        let nf = n as f64;
        match *self {
            MarginFamily::ScaledBetaBinomial { rho } if rho >= nf => {
                if n <= 1 {
                    (MarginFamily::ScaledBinomial, true)
                } else {
                    (MarginFamily::ScaledBetaBinomial { rho: (nf - 1.0).max(0.5 * (1.0 + nf)) }, true)
                }
            }
            MarginFamily::Beta { rho } if rho >= nf => (MarginFamily::Beta { rho: (nf - 1.0).max(0.5 * nf) }, true),
            other => (other, false),
        }
    }

    /// Shape parameters for `0 < t < 1`; `None` for the binomial family.
    pub fn shapes(&self, n: usize, t: f64) -> Result<Option<ShapePair>> {
        self.validate(n)?;
        check_t(t)?;
        let nf = n as f64;
        match *self {
            MarginFamily::ScaledBinomial => Ok(None),
            MarginFamily::ScaledBetaBinomial { rho } => {
                let scale = (nf - rho) / (rho - 1.0);
                ShapePair::new(t * scale, (1.0 - t) * scale).map(Some)
            }
            MarginFamily::Beta { rho } => {
                let scale = (nf - rho) / rho;
                ShapePair::new(t * scale, (1.0 - t) * scale).map(Some)
            }
        }
    }

    /// `Var(W)` by the closed form: `t(1-t)/n` times `rho` (1 for the binomial).
    pub fn variance(&self, n: usize, t: f64) -> f64 {
        self.rho().unwrap_or(1.0) * t * (1.0 - t) / n as f64
    }

    /// Constant `kappa` in the bound `Var(W) <= kappa * t(1-t)/n`.
    pub fn kappa(&self) -> f64 {
        self.rho().unwrap_or(1.0).max(1.0)
    }

    /// The smoothing law at location `t` for size `n`, with probabilities precomputed.
    pub fn law(&self, n: usize, t: f64) -> Result<MarginLaw> {
        self.validate(n)?;
        check_t(t)?;
        if t == 0.0 || t == 1.0 {
            return Ok(if self.is_discrete() {
                let mut pmf = vec![0.0; n + 1];
                pmf[if t == 0.0 { 0 } else { n }] = 1.0;
                MarginLaw::counts(pmf)
            } else {
                MarginLaw::Degenerate(t)
            });
        }
        Ok(match self {
            MarginFamily::ScaledBinomial => MarginLaw::counts(binomial_pmf(n, t)?),
            MarginFamily::ScaledBetaBinomial { .. } => {
                MarginLaw::counts(beta_binomial_pmf(n, self.shapes(n, t)?.expect("beta-binomial has shapes")))
            }
            MarginFamily::Beta { .. } => MarginLaw::Beta(self.shapes(n, t)?.expect("beta has shapes")),
        })
    }
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::domain(format!("smoothing location must lie in [0, 1], got {t}")))
    }
}

/// A smoothing law with its probabilities precomputed.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginLaw {
    /// Count `S` on `0..=n`; `W = S/n`. `tails[s] = Pr(S >= s)`, with a trailing 0.
    Counts {
        pmf: Vec<f64>,
        tails: Vec<f64>,
    },
    Beta(ShapePair),
    /// Point mass on `[0, 1]`.
    Degenerate(f64),
}

impl MarginLaw {
    fn counts(pmf: Vec<f64>) -> Self {
        let mut tails = upper_tails(&pmf);
        tails.push(0.0);
        MarginLaw::Counts { pmf, tails }
    }

    /// `Pr(S > w)` (count scale) or `Pr(W > w)` (unit scale for beta laws).
    pub fn survival(&self, w: f64) -> f64 {
        match self {
            MarginLaw::Counts { tails, .. } => {
                if w < 0.0 {
                    1.0
                } else {
                    let k = w.floor() as usize;
                    tails.get(k + 1).copied().unwrap_or(0.0)
                }
            }
            MarginLaw::Beta(shapes) => {
                if w < 0.0 {
                    1.0
                } else if w >= 1.0 {
                    0.0
                } else {
                    beta_survival(*shapes, w).expect("w lies in [0, 1)")
                }
            }
            MarginLaw::Degenerate(x) => f64::from(w < *x),
        }
    }

    /// Generalized inverse of the distribution function on the unit scale:
    /// the smallest `w` with `Pr(W <= w) >= p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("probability must lie in [0, 1], got {p}")));
        }
        Ok(match self {
            MarginLaw::Counts { tails, .. } => {
                let n = tails.len() - 2;
                // Pr(S <= s) = 1 - tails[s + 1] is nondecreasing in s.
                let (mut lo, mut hi) = (0, n);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if 1.0 - tails[mid + 1] < p {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                lo as f64 / n as f64
            }
            MarginLaw::Beta(shapes) => inv_reg_inc_beta(p, *shapes)?,
            MarginLaw::Degenerate(x) => *x,
        })
    }
}

/// Survival function of the smoothing margin at threshold `w`, evaluated
/// directly (incomplete beta for the binomial, log-space mass sums for the
/// beta-binomial) rather than through a precomputed law.
pub fn margin_survival(family: MarginFamily, n: usize, t: f64, w: f64) -> Result<f64> {
    family.validate(n)?;
    check_t(t)?;
    if w.is_nan() {
        return Err(Error::domain("threshold is NaN"));
    }
    match family {
        MarginFamily::ScaledBinomial => binomial_survival_gt(n, t, w),
        MarginFamily::ScaledBetaBinomial { .. } => {
            if t == 0.0 {
                Ok(f64::from(w < 0.0))
            } else if t == 1.0 {
                Ok(f64::from(w < n as f64))
            } else {
                beta_binomial_survival_gt(n, family.shapes(n, t)?.expect("interior t"), w)
            }
        }
        MarginFamily::Beta { .. } => {
            if w < 0.0 {
                Ok(1.0)
            } else if w >= 1.0 || t == 0.0 {
                Ok(0.0)
            } else if t == 1.0 {
                Ok(1.0)
            } else {
                beta_survival(family.shapes(n, t)?.expect("interior t"), w)
            }
        }
    }
}

/// `(ln Pr(W > w), ln Pr(W <= w))` on the same threshold scale as [`margin_survival`].
/// Tail probabilities far below `f64` resolution keep distinct, finite logs.
pub fn margin_log_tails(family: MarginFamily, n: usize, t: f64, w: f64) -> Result<(f64, f64)> {
    let survival = margin_survival(family, n, t, w)?;
    if survival == 0.0 || survival == 1.0 {
        let interior = t > 0.0 && t < 1.0;
        let inside = if family.is_discrete() { w >= 0.0 && w < n as f64 } else { w > 0.0 && w < 1.0 };
        if !(interior && inside) {
            return Ok((survival.ln(), (1.0 - survival).ln()));
        }
    }
    Ok(match family {
        MarginFamily::ScaledBinomial => {
            let k = w.floor();
            let shapes = ShapePair::new(k + 1.0, n as f64 - k)?;
            ln_reg_inc_beta_tails(t, shapes)?
        }
        MarginFamily::ScaledBetaBinomial { .. } => {
            let ln_pmf = beta_binomial_ln_pmf_vec(n, family.shapes(n, t)?.expect("interior t"));
            let k = w.floor() as usize;
            (log_sum_exp(&ln_pmf[k + 1..]), log_sum_exp(&ln_pmf[..=k]))
        }
        MarginFamily::Beta { .. } => {
            let (lower, upper) = ln_reg_inc_beta_tails(w, family.shapes(n, t)?.expect("interior t"))?;
            (upper, lower)
        }
    })
}

/// Generalized inverse of the smoothing distribution function: returns `W` on
/// the unit scale (`S/n` for the discrete families) with `Pr(W <= w) >= p`
/// minimal. A uniform `p` therefore yields a draw from the margin.
pub fn margin_quantile(family: MarginFamily, n: usize, t: f64, p: f64) -> Result<f64> {
    family.law(n, t)?.quantile(p)
}

/// `F̄_t(a_r)` for ranks `r = 1..=n` (index `r - 1`), at the thresholds the
/// estimators use: `a_r = r - 1` for the discrete families and `(r - 1/2)/n`
/// for the beta family.
pub fn survival_at_ranks(family: MarginFamily, n: usize, t: f64) -> Result<Vec<f64>> {
    Ok(survival_at_ranks_from_law(&family.law(n, t)?, n))
}

pub(crate) fn survival_at_ranks_from_law(law: &MarginLaw, n: usize) -> Vec<f64> {
    match law {
        MarginLaw::Counts { tails, .. } => tails[1..=n].to_vec(),
        _ => (1..=n).map(|r| law.survival((r as f64 - 0.5) / n as f64)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BB2: MarginFamily = MarginFamily::ScaledBetaBinomial { rho: 2.0 };

    #[test]
    fn survival_examples() {
        let v = margin_survival(MarginFamily::ScaledBinomial, 2, 0.5, 0.0).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        let v = margin_survival(MarginFamily::Beta { rho: 2.0 }, 10, 0.5, 0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn beta_binomial_moments_by_enumeration() {
        let MarginLaw::Counts { pmf, .. } = BB2.law(10, 0.3).unwrap() else { panic!("discrete law expected") };
        let mean: f64 = pmf.iter().enumerate().map(|(s, p)| s as f64 * p).sum();
        let second: f64 = pmf.iter().enumerate().map(|(s, p)| (s as f64 / 10.0).powi(2) * p).sum();
        assert!((mean - 3.0).abs() < 1e-12);
        assert!((second - 0.09 - 0.042).abs() < 1e-12);
    }

    #[test]
    fn endpoint_conventions() {
        assert_eq!(margin_survival(BB2, 10, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(margin_survival(BB2, 10, 0.0, -0.5).unwrap(), 1.0);
        assert_eq!(margin_survival(BB2, 10, 1.0, 9.0).unwrap(), 1.0);
        assert_eq!(margin_survival(BB2, 10, 1.0, 10.0).unwrap(), 0.0);
        let beta = MarginFamily::Beta { rho: 2.0 };
        assert_eq!(margin_survival(beta, 10, 0.0, 0.05).unwrap(), 0.0);
        assert_eq!(margin_survival(beta, 10, 1.0, 0.95).unwrap(), 1.0);
        assert_eq!(survival_at_ranks(beta, 4, 0.0).unwrap(), vec![0.0; 4]);
        assert_eq!(survival_at_ranks(BB2, 4, 1.0).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn rho_validation_and_clamp() {
        assert!(MarginFamily::ScaledBetaBinomial { rho: 1.0 }.validate(10).is_err());
        assert!(MarginFamily::ScaledBetaBinomial { rho: 10.0 }.validate(10).is_err());
        assert!(MarginFamily::Beta { rho: 0.0 }.validate(10).is_err());
        assert!(MarginFamily::Beta { rho: 9.5 }.validate(10).is_ok());
        assert!(margin_survival(BB2, 2, 0.5, 0.0).is_err());

        let (f, changed) = MarginFamily::ScaledBetaBinomial { rho: 4.0 }.clamped(2);
        assert!(changed);
        assert_eq!(f, MarginFamily::ScaledBetaBinomial { rho: 1.5 });
        assert!(f.validate(2).is_ok());
        assert_eq!(MarginFamily::ScaledBetaBinomial { rho: 4.0 }.clamped(1).0, MarginFamily::ScaledBinomial);
        assert_eq!(MarginFamily::Beta { rho: 4.0 }.clamped(1).0, MarginFamily::Beta { rho: 0.5 });
        assert_eq!(MarginFamily::Beta { rho: 4.0 }.clamped(3).0, MarginFamily::Beta { rho: 2.0 });
        assert_eq!(MarginFamily::Beta { rho: 4.0 }.clamped(30), (MarginFamily::Beta { rho: 4.0 }, false));
        for n in 1..50 {
            for fam in [MarginFamily::ScaledBetaBinomial { rho: 4.0 }, MarginFamily::Beta { rho: 4.0 }] {
                assert!(fam.clamped(n).0.validate(n).is_ok(), "{fam:?} n={n}");
            }
        }
    }

    #[test]
    fn quantile_examples() {
        let bern = MarginFamily::ScaledBinomial;
        assert_eq!(margin_quantile(bern, 1, 0.3, 0.7).unwrap(), 0.0);
        assert_eq!(margin_quantile(bern, 1, 0.3, 0.7000001).unwrap(), 1.0);
        assert_eq!(margin_quantile(bern, 1, 0.3, 0.1).unwrap(), 0.0);
        assert_eq!(margin_quantile(bern, 1, 0.3, 1.0).unwrap(), 1.0);
        let beta = MarginFamily::Beta { rho: 2.0 };
        assert_eq!(beta.shapes(10, 0.5).unwrap(), Some(ShapePair::new(2.0, 2.0).unwrap()));
        assert!((margin_quantile(beta, 10, 0.5, 0.5).unwrap() - 0.5).abs() < 1e-14);
        for fam in [bern, BB2, beta] {
            for &p in &[0.0, 0.2, 0.9, 0.999] {
                assert_eq!(margin_quantile(fam, 10, 0.0, p).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn law_survival_matches_direct_survival() {
        for fam in [MarginFamily::ScaledBinomial, MarginFamily::ScaledBetaBinomial { rho: 3.0 }] {
            for &t in &[0.0, 0.04, 0.5, 0.87, 1.0] {
                let law = fam.law(12, t).unwrap();
                for k in -1..=12 {
                    let direct = margin_survival(fam, 12, t, k as f64).unwrap();
                    assert!((law.survival(k as f64) - direct).abs() < 1e-13, "{fam:?} t={t} k={k}");
                }
            }
        }
    }

    #[test]
    fn reflection_symmetry() {
        let n = 9;
        for fam in [MarginFamily::ScaledBinomial, MarginFamily::ScaledBetaBinomial { rho: 2.5 }] {
            for &t in &[0.0, 0.15, 0.5, 0.72] {
                for k in 0..n {
                    let lhs = margin_survival(fam, n, t, k as f64).unwrap();
                    let rhs = 1.0 - margin_survival(fam, n, 1.0 - t, (n - k - 1) as f64).unwrap();
                    assert!((lhs - rhs).abs() < 1e-13, "{fam:?} t={t} k={k}");
                }
            }
        }
        let beta = MarginFamily::Beta { rho: 0.7 };
        for &t in &[0.15, 0.5, 0.72] {
            for &w in &[0.05, 0.3, 0.5, 0.81] {
                let lhs = margin_survival(beta, n, t, w).unwrap();
                let rhs = 1.0 - margin_survival(beta, n, 1.0 - t, 1.0 - w).unwrap();
                assert!((lhs - rhs).abs() < 1e-13, "t={t} w={w}");
            }
        }
    }

    #[test]
    fn log_tails_agree_with_plain_values() {
        for fam in [MarginFamily::ScaledBinomial, BB2, MarginFamily::Beta { rho: 2.0 }] {
            for &t in &[0.0, 0.2, 0.6, 1.0] {
                for &w in &[0.0, 0.35, 3.0, 7.0] {
                    let w = if fam.is_discrete() { w } else { w / 8.0 };
                    let s = margin_survival(fam, 8, t, w).unwrap();
                    let (ls, lf) = margin_log_tails(fam, 8, t, w).unwrap();
                    assert!((ls.exp() - s).abs() < 1e-13, "{fam:?} t={t} w={w}");
                    assert!((lf.exp() - (1.0 - s)).abs() < 1e-13, "{fam:?} t={t} w={w}");
                }
            }
        }
    }
}
