//! Parametric copulas used as data-generating models and as fixed survival
//! copulas: distribution functions, samplers and Kendall's tau parameterization.
//!
//! Samplers: Marshall-Olkin frailty for the Archimedean families (gamma for
//! Clayton, positive stable for Gumbel-Hougaard, logarithmic for Frank with
//! `d >= 3`), conditional inversion for bivariate Frank, Cholesky for the
//! Gaussian copula and the max-device for Khoudraji-Clayton.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{bivariate_normal_cdf, std_normal_cdf, std_normal_quantile};
use crate::ranks::ObservationMatrix;
use crate::rng::{open01, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CopulaFamily {
    Independence,
    Clayton,
    Frank,
    GumbelHougaard,
    GaussianBivariate,
    KhoudrajiClayton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    Independence,
    Clayton {
        theta: f64,
    },
    Frank {
        theta: f64,
    },
    GumbelHougaard {
        theta: f64,
    },
    GaussianBivariate {
        r: f64,
    },
    /// `C(u, v) = u^(1-s1) v^(1-s2) Clayton_theta(u^s1, v^s2)`.
    KhoudrajiClayton {
        s1: f64,
        s2: f64,
        theta: f64,
    },
}

/// A validated parametric copula of dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaModel {
    params: ModelParams,
    d: usize,
}

impl CopulaModel {
    pub fn new(params: ModelParams, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::param(format!("copula dimension must be at least 2, got {d}")));
        }
        let bivariate_only = |name: &str| {
            if d == 2 {
                Ok(())
            } else {
                Err(Error::param(format!("the {name} copula is bivariate, got d={d}")))
            }
        };
        let finite = |x: f64| x.is_finite();
        match params {
            ModelParams::Independence => {}
            ModelParams::Clayton { theta } => {
                if !(finite(theta) && theta > 0.0) {
                    return Err(Error::param(format!("Clayton theta must be positive, got {theta}")));
                }
            }
            ModelParams::Frank { theta } => {
                if !finite(theta) || theta == 0.0 {
                    return Err(Error::param(format!("Frank theta must be finite and nonzero, got {theta}")));
                }
                if theta < 0.0 && d > 2 {
                    return Err(Error::param("Frank copulas with theta < 0 exist only for d = 2"));
                }
            }
            ModelParams::GumbelHougaard { theta } => {
                if !(finite(theta) && theta >= 1.0) {
                    return Err(Error::param(format!("Gumbel-Hougaard theta must be >= 1, got {theta}")));
                }
            }
            ModelParams::GaussianBivariate { r } => {
                bivariate_only("Gaussian")?;
                if r.is_nan() || r.abs() >= 1.0 {
                    return Err(Error::param(format!("correlation must lie in (-1, 1), got {r}")));
                }
            }
            ModelParams::KhoudrajiClayton { s1, s2, theta } => {
                bivariate_only("Khoudraji-Clayton")?;
                if !(s1 > 0.0 && s1 <= 1.0 && s2 > 0.0 && s2 <= 1.0) {
                    return Err(Error::param(format!("shape parameters must lie in (0, 1], got ({s1}, {s2})")));
                }
                if !(finite(theta) && theta > 0.0) {
                    return Err(Error::param(format!("Clayton theta must be positive, got {theta}")));
                }
            }
        }
        Ok(CopulaModel { params, d })
    }

    pub fn independence(d: usize) -> Result<Self> {
        Self::new(ModelParams::Independence, d)
    }

    pub fn clayton(theta: f64, d: usize) -> Result<Self> {
        Self::new(ModelParams::Clayton { theta }, d)
    }

    pub fn frank(theta: f64, d: usize) -> Result<Self> {
        Self::new(ModelParams::Frank { theta }, d)
    }

    pub fn gumbel_hougaard(theta: f64, d: usize) -> Result<Self> {
        Self::new(ModelParams::GumbelHougaard { theta }, d)
    }

    pub fn gaussian(r: f64) -> Result<Self> {
        Self::new(ModelParams::GaussianBivariate { r }, 2)
    }

    pub fn khoudraji_clayton(s1: f64, s2: f64, theta: f64) -> Result<Self> {
        Self::new(ModelParams::KhoudrajiClayton { s1, s2, theta }, 2)
    }

    /// Model of the given family whose bivariate margins have Kendall's tau `tau`.
    /// Clayton and Frank at `tau = 0` degenerate to the independence copula.
    pub fn from_tau(family: CopulaFamily, tau: f64, d: usize) -> Result<Self> {
        if tau == 0.0 && matches!(family, CopulaFamily::Clayton | CopulaFamily::Frank | CopulaFamily::Independence) {
            return Self::independence(d);
        }
        let theta = tau_to_param(family, tau)?;
        match family {
            CopulaFamily::Clayton => Self::clayton(theta, d),
            CopulaFamily::Frank => Self::frank(theta, d),
            CopulaFamily::GumbelHougaard => Self::gumbel_hougaard(theta, d),
            CopulaFamily::GaussianBivariate => {
                check_dim(2, d)?;
                Self::gaussian(theta)
            }
            CopulaFamily::Independence | CopulaFamily::KhoudrajiClayton => unreachable!("rejected by tau_to_param"),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn family(&self) -> CopulaFamily {
        match self.params {
            ModelParams::Independence => CopulaFamily::Independence,
            ModelParams::Clayton { .. } => CopulaFamily::Clayton,
            ModelParams::Frank { .. } => CopulaFamily::Frank,
            ModelParams::GumbelHougaard { .. } => CopulaFamily::GumbelHougaard,
            ModelParams::GaussianBivariate { .. } => CopulaFamily::GaussianBivariate,
            ModelParams::KhoudrajiClayton { .. } => CopulaFamily::KhoudrajiClayton,
        }
    }

    /// Kendall's tau of the bivariate margins; `None` when there is no closed form.
    pub fn tau(&self) -> Option<f64> {
        match self.params {
            ModelParams::Independence => Some(0.0),
            ModelParams::Clayton { theta } => Some(theta / (theta + 2.0)),
            ModelParams::Frank { theta } => Some(frank_tau(theta)),
            ModelParams::GumbelHougaard { theta } => Some(1.0 - 1.0 / theta),
            ModelParams::GaussianBivariate { r } => Some(2.0 / PI * r.asin()),
            ModelParams::KhoudrajiClayton { .. } => None,
        }
    }

    /// Copula distribution function at `u` in `[0, 1]^d`.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.d, u.len())?;
        if let Some(bad) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::domain(format!("copula argument must lie in [0, 1], got {bad}")));
        }
        Ok(self.cdf_unchecked(u))
    }

    pub(crate) fn cdf_unchecked(&self, u: &[f64]) -> f64 {
        if u.contains(&0.0) {
            return 0.0;
        }
        // Uniform margins hold exactly, whatever the rounding of the closed forms.
        let mut below_one = u.iter().filter(|&&x| x < 1.0);
        match (below_one.next(), below_one.next()) {
            (None, _) => return 1.0,
            (Some(&x), None) => return x,
            _ => {}
        }
        let value = match self.params {
            ModelParams::Independence => u.iter().product(),
            ModelParams::Clayton { theta } => clayton_cdf(theta, u),
            ModelParams::Frank { theta } => frank_cdf(theta, u),
            ModelParams::GumbelHougaard { theta } => {
                let s: f64 = u.iter().map(|x| (-x.ln()).powf(theta)).sum();
                (-s.powf(1.0 / theta)).exp()
            }
            ModelParams::GaussianBivariate { r } => {
                let h = std_normal_quantile(u[0]).expect("argument checked");
                let k = std_normal_quantile(u[1]).expect("argument checked");
                bivariate_normal_cdf(h, k, r).expect("correlation checked")
            }
            ModelParams::KhoudrajiClayton { s1, s2, theta } => {
                let (a, b) = (u[0], u[1]);
                a.powf(1.0 - s1) * b.powf(1.0 - s2) * clayton_cdf(theta, &[a.powf(s1), b.powf(s2)])
            }
        };
        value.clamp(0.0, 1.0)
    }

    /// `n` independent draws, reproducible from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ObservationMatrix> {
        self.sample_with(&mut stream_rng(seed, 0), n)
    }

    /// `n` independent draws from the given generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<ObservationMatrix> {
        if n == 0 {
            return Err(Error::param("sample size must be at least 1"));
        }
        let mut values = Vec::with_capacity(n * self.d);
        let mut row = vec![0.0; self.d];
        for _ in 0..n {
            self.draw(rng, &mut row);
            values.extend_from_slice(&row);
        }
        ObservationMatrix::from_row_major(n, self.d, values)
    }

    /// One draw into `out` (length `d`).
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.params {
            ModelParams::Independence => out.iter_mut().for_each(|x| *x = open01(rng)),
            ModelParams::Clayton { theta } => clayton_draw(theta, rng, out),
            ModelParams::Frank { theta } => {
                if self.d == 2 {
                    let u = open01(rng);
                    let p = open01(rng);
                    out[0] = u;
                    out[1] = frank_conditional_inverse(theta, u, p);
                } else {
                    let v = log_series_draw(theta, rng) as f64;
                    let a = -(-theta).exp_m1();
                    for x in out.iter_mut() {
                        let e: f64 = Exp1.sample(rng);
                        *x = -(-a * (-e / v).exp()).ln_1p() / theta;
                    }
                }
            }
            ModelParams::GumbelHougaard { theta } => {
                let alpha = 1.0 / theta;
                let s = positive_stable_draw(alpha, rng);
                for x in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    *x = (-(e / s).powf(alpha)).exp();
                }
            }
            ModelParams::GaussianBivariate { r } => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                out[0] = std_normal_cdf(z1);
                out[1] = std_normal_cdf(r * z1 + (1.0 - r * r).sqrt() * z2);
            }
            ModelParams::KhoudrajiClayton { s1, s2, theta } => {
                let mut v = [0.0; 2];
                clayton_draw(theta, rng, &mut v);
                for (j, s) in [s1, s2].into_iter().enumerate() {
                    let w = open01(rng);
                    out[j] = if s < 1.0 { v[j].powf(1.0 / s).max(w.powf(1.0 / (1.0 - s))) } else { v[j] };
                }
            }
        }
    }
}

fn clayton_cdf(theta: f64, u: &[f64]) -> f64 {
    let s: f64 = u.iter().map(|x| (-theta * x.ln()).exp_m1()).sum();
    (-s.ln_1p() / theta).exp()
}

fn frank_cdf(theta: f64, u: &[f64]) -> f64 {
    if theta > 0.0 {
        let denom = (-theta).exp_m1();
        let num: f64 = u.iter().map(|x| (-theta * x).exp_m1()).product();
        -(num / denom.powi(u.len() as i32 - 1)).ln_1p() / theta
    } else {
        // Bivariate only. All factors are positive and may overflow, so work with logs.
        let a = -theta;
        let ln_expm1 = |x: f64| x + (-(-x).exp_m1()).ln();
        let l = ln_expm1(a * u[0]) + ln_expm1(a * u[1]) - ln_expm1(a);
        let ln_1p_r = if l > 0.0 { l + (-l).exp().ln_1p() } else { l.exp().ln_1p() };
        ln_1p_r / a
    }
}

fn clayton_draw<R: Rng + ?Sized>(theta: f64, rng: &mut R, out: &mut [f64]) {
    let frailty: f64 = Gamma::new(1.0 / theta, 1.0).expect("positive shape").sample(rng);
    for x in out.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        *x = (-(e / frailty).ln_1p() / theta).exp();
    }
}

/// Second coordinate of a bivariate Frank draw given the first, by inverting
/// the conditional distribution at probability `p`.
fn frank_conditional_inverse(theta: f64, u: f64, p: f64) -> f64 {
    let e = (-theta * u).exp();
    let v = -(p * (-theta).exp_m1() / (p + (1.0 - p) * e)).ln_1p() / theta;
    v.clamp(0.0, 1.0)
}

/// Logarithmic series draw with parameter `1 - exp(-theta)` (Kemp's LK algorithm).
fn log_series_draw<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> u64 {
    let p = -(-theta).exp_m1();
    let u2 = open01(rng);
    if u2 > p {
        return 1;
    }
    let u1 = open01(rng);
    let q = -(-theta * u1).exp_m1();
    if u2 < q * q {
        let k = 1.0 + (u2.ln() / q.ln()).floor();
        return if k.is_finite() && k < u64::MAX as f64 { k as u64 } else { u64::MAX };
    }
    if u2 > q {
        1
    } else {
        2
    }
}

/// Positive stable variable with Laplace transform `exp(-s^alpha)`, `0 < alpha <= 1`
/// (Kanter's representation).
fn positive_stable_draw<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha == 1.0 {
        return 1.0;
    }
    let angle = PI * open01(rng);
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * angle).sin() / angle.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * angle).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}

/// `D_1(x) = (1/x) * integral_0^x t / (e^t - 1) dt`.
fn debye1(x: f64) -> f64 {
    if x < 0.0 {
        return debye1(-x) - 0.5 * x;
    }
    if x == 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // 1 - x/4 + sum_k B_2k x^2k / ((2k + 1) (2k)!)
        const BERNOULLI: [f64; 10] = [
            1.0 / 6.0,
            -1.0 / 30.0,
            1.0 / 42.0,
            -1.0 / 30.0,
            5.0 / 66.0,
            -691.0 / 2730.0,
            7.0 / 6.0,
            -3617.0 / 510.0,
            43867.0 / 798.0,
            -174611.0 / 330.0,
        ];
        let mut sum = 1.0 - 0.25 * x;
        let mut factorial = 1.0;
        let mut power = 1.0;
        for (i, b) in BERNOULLI.iter().enumerate() {
            let k2 = 2 * (i + 1);
            factorial *= ((k2 - 1) * k2) as f64;
            power *= x * x;
            sum += b * power / ((k2 + 1) as f64 * factorial);
        }
        return sum;
    }
    // integral = pi^2/6 - sum_k e^{-kx} (x/k + 1/k^2)
    let mut tail = 0.0;
    for k in 1..10_000 {
        let k = k as f64;
        let term = (-k * x).exp() * (x / k + 1.0 / (k * k));
        tail += term;
        if term < 1e-18 * tail {
            break;
        }
    }
    (PI * PI / 6.0 - tail) / x
}

fn frank_tau(theta: f64) -> f64 {
    if theta == 0.0 {
        0.0
    } else {
        1.0 - 4.0 / theta * (1.0 - debye1(theta))
    }
}

/// Parameter of a one-parameter family with Kendall's tau `tau`: theta for the
/// Archimedean families, the correlation for the Gaussian copula.
pub fn tau_to_param(family: CopulaFamily, tau: f64) -> Result<f64> {
    if !(tau > -1.0 && tau < 1.0) {
        return Err(Error::domain(format!("Kendall's tau must lie in (-1, 1), got {tau}")));
    }
    match family {
        CopulaFamily::Clayton if tau > 0.0 => Ok(2.0 * tau / (1.0 - tau)),
        CopulaFamily::Clayton => Err(Error::domain("Clayton copulas here require tau > 0")),
        CopulaFamily::GumbelHougaard if tau >= 0.0 => Ok(1.0 / (1.0 - tau)),
        CopulaFamily::GumbelHougaard => Err(Error::domain("Gumbel-Hougaard copulas require tau >= 0")),
        CopulaFamily::GaussianBivariate => Ok((PI * tau / 2.0).sin()),
        CopulaFamily::Frank => {
            if tau == 0.0 {
                return Err(Error::domain("tau = 0 is the independence copula, not a Frank parameter"));
            }
            let (mut lo, mut hi) = (-500.0_f64, 500.0_f64);
            if tau <= frank_tau(lo) || tau >= frank_tau(hi) {
                return Err(Error::domain(format!("tau {tau} is beyond the supported Frank range")));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if frank_tau(mid) < tau {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi.abs().max(1.0) {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        }
        CopulaFamily::Independence | CopulaFamily::KhoudrajiClayton => {
            Err(Error::domain(format!("{family:?} is not parameterized by Kendall's tau")))
        }
    }
}

impl fmt::Display for CopulaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.params {
            ModelParams::Independence => write!(f, "indep:d={}", self.d),
            ModelParams::Clayton { theta } => write!(f, "clayton:theta={theta}:d={}", self.d),
            ModelParams::Frank { theta } => write!(f, "frank:theta={theta}:d={}", self.d),
            ModelParams::GumbelHougaard { theta } => write!(f, "gumbel:theta={theta}:d={}", self.d),
            ModelParams::GaussianBivariate { r } => write!(f, "normal:r={r}"),
            ModelParams::KhoudrajiClayton { s1, s2, theta } => {
                write!(f, "khoudraji-clayton:s1={s1}:s2={s2}:theta={theta}")
            }
        }
    }
}

/// Grammar: `family[:key=value]...` with family one of `indep`, `clayton`,
/// `frank`, `gumbel` (or `gh`), `normal` (or `gaussian`), `khoudraji-clayton`;
/// keys `tau`, `theta`, `r`, `s1`, `s2`, `d` (default 2). Example: `clayton:tau=0.5:d=3`.
impl FromStr for CopulaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default().trim().to_ascii_lowercase();
        let family = match name.as_str() {
            "indep" | "independence" | "pi" => CopulaFamily::Independence,
            "clayton" => CopulaFamily::Clayton,
            "frank" => CopulaFamily::Frank,
            "gumbel" | "gh" | "gumbel-hougaard" => CopulaFamily::GumbelHougaard,
            "normal" | "gaussian" => CopulaFamily::GaussianBivariate,
            "khoudraji-clayton" | "khoudraji" => CopulaFamily::KhoudrajiClayton,
            other => return Err(Error::parse(format!("unknown copula family '{other}' in '{s}'"))),
        };
        let (mut tau, mut theta, mut r, mut s1, mut s2, mut d) = (None, None, None, None, None, None);
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("expected key=value, got '{part}' in '{s}'")))?;
            let number = || {
                value.trim().parse::<f64>().map_err(|_| Error::parse(format!("invalid number '{value}' for '{key}'")))
            };
            let slot = match key.trim() {
                "tau" => &mut tau,
                "theta" => &mut theta,
                "r" | "rho" => &mut r,
                "s1" => &mut s1,
                "s2" => &mut s2,
                "d" => {
                    let v: usize =
                        value.trim().parse().map_err(|_| Error::parse(format!("invalid dimension '{value}'")))?;
                    if d.replace(v).is_some() {
                        return Err(Error::parse("dimension given twice"));
                    }
                    continue;
                }
                other => return Err(Error::parse(format!("unknown model key '{other}' in '{s}'"))),
            };
            if slot.replace(number()?).is_some() {
                return Err(Error::parse(format!("key '{key}' given twice in '{s}'")));
            }
        }
        let d = d.unwrap_or(2);
        let one_param = |raw: Option<f64>, raw_name: &str| -> Result<Option<f64>> {
            match (tau, raw) {
                (Some(_), Some(_)) => Err(Error::parse(format!("give either tau or {raw_name}, not both"))),
                (None, None) => Err(Error::parse(format!("'{s}' needs tau or {raw_name}"))),
                (_, raw) => Ok(raw),
            }
        };
        let unexpected = |present: bool, key: &str| {
            if present {
                Err(Error::parse(format!("key '{key}' does not apply to '{name}'")))
            } else {
                Ok(())
            }
        };
        match family {
            CopulaFamily::Independence => {
                unexpected(tau.is_some() || theta.is_some() || r.is_some(), "parameter")?;
                unexpected(s1.is_some() || s2.is_some(), "s1/s2")?;
                CopulaModel::independence(d)
            }
            CopulaFamily::KhoudrajiClayton => {
                unexpected(tau.is_some() || r.is_some(), "tau/r")?;
                check_dim(2, d)?;
                let need = |v: Option<f64>, k: &str| v.ok_or_else(|| Error::parse(format!("'{s}' needs {k}")));
                CopulaModel::khoudraji_clayton(need(s1, "s1")?, need(s2, "s2")?, need(theta, "theta")?)
            }
            CopulaFamily::GaussianBivariate => {
                unexpected(theta.is_some() || s1.is_some() || s2.is_some(), "theta/s1/s2")?;
                check_dim(2, d)?;
                match one_param(r, "r")? {
                    Some(r) => CopulaModel::gaussian(r),
                    None => CopulaModel::from_tau(family, tau.expect("checked"), 2),
                }
            }
            _ => {
                unexpected(r.is_some() || s1.is_some() || s2.is_some(), "r/s1/s2")?;
                match one_param(theta, "theta")? {
                    Some(theta) => CopulaModel::new(
                        match family {
                            CopulaFamily::Clayton => ModelParams::Clayton { theta },
                            CopulaFamily::Frank => ModelParams::Frank { theta },
                            _ => ModelParams::GumbelHougaard { theta },
                        },
                        d,
                    ),
                    None => CopulaModel::from_tau(family, tau.expect("checked"), d),
                }
            }
        }
    }
}
