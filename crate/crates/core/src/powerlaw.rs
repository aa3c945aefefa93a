//! Power-law fits to integer histograms.
//!
//! Two estimators are provided and every fit records which one produced it:
//!
//! * [`FitMethod::LogBinnedRegression`]: keys are grouped into bins
//!   `[x_min·2^j, x_min·2^(j+1))`, each bin's mass is divided by the number of
//!   integers it covers, and a least-squares line is fitted to log density
//!   against the log of the bin's geometric center. The exponent is minus the
//!   slope. This is what a log-log plot of the distribution shows.
//! * [`FitMethod::DiscreteMle`]: maximum likelihood for
//!   `p(x) = x^(−α) / ζ(α, x_min)`, `x ≥ x_min`, where `ζ` is the Hurwitz zeta
//!   function. When `x_min` is not given it is chosen to minimize the
//!   Kolmogorov–Smirnov distance between the data and the fitted model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Histogram;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    #[default]
    LogBinnedRegression,
    DiscreteMle,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMethod::LogBinnedRegression => "log-binned-regression",
            FitMethod::DiscreteMle => "discrete-mle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitWarning {
    /// The fitted exponent is not positive: the data does not decay.
    NonDecaying,
    /// The likelihood maximum sits on the edge of the exponent search interval.
    AtSearchBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit<T> {
    /// Decay exponent: the fitted model is `p(x) ∝ x^(−exponent)`.
    pub exponent: T,
    pub method: FitMethod,
    pub x_min: u64,
    pub x_max: u64,
    /// Regression bins used, or distinct values in the MLE tail.
    pub n_points: usize,
    /// Observations with `x ≥ x_min`.
    pub n_samples: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_distance: Option<T>,
    pub warning: Option<FitWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("need at least {needed} usable points at or above x_min, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("x_min must be at least 1")]
    InvalidXmin,
}

pub const MIN_POINTS: usize = 3;
/// Exponent search interval for the MLE.
pub const MLE_EXPONENT_RANGE: (f64, f64) = (1.0001, 20.0);
/// When scanning for `x_min`, tails with fewer observations are not considered.
pub const MIN_TAIL_SAMPLES: u64 = 10;
/// Upper bound on the number of `x_min` candidates tried by the scan.
pub const MAX_XMIN_CANDIDATES: usize = 256;

pub fn fit_power_law<T: Scalar>(h: &Histogram, method: FitMethod, x_min: Option<u64>) -> Result<PowerLawFit<T>, FitError> {
    match method {
        FitMethod::LogBinnedRegression => fit_log_binned(h, x_min),
        FitMethod::DiscreteMle => match x_min {
            Some(x) => fit_mle_at(h, x),
            None => fit_mle_scan(h),
        },
    }
}

fn tail(h: &Histogram, x_min: u64) -> Vec<(u64, u64)> {
    h.iter().filter(|&(x, _)| x >= x_min).collect()
}

fn resolve_x_min(h: &Histogram, x_min: Option<u64>) -> Result<u64, FitError> {
    match x_min {
        Some(0) => Err(FitError::InvalidXmin),
        Some(x) => Ok(x),
        None => Ok(h.iter().map(|(x, _)| x).find(|&x| x >= 1).unwrap_or(1)),
    }
}

fn decays<T: Scalar>(exponent: T) -> bool {
    exponent > T::epsilon().sqrt()
}

/// Least-squares fit on logarithmic bins.
pub fn fit_log_binned<T: Scalar>(h: &Histogram, x_min: Option<u64>) -> Result<PowerLawFit<T>, FitError> {
    let x_min = resolve_x_min(h, x_min)?;
    let data = tail(h, x_min);
    if data.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POINTS,
            found: data.len(),
        });
    }
    let x_max = data.last().unwrap().0;
    let n_samples: u64 = data.iter().map(|&(_, c)| c).sum();
    let total = T::from_count(n_samples);

    let mut points: Vec<(T, T)> = Vec::new();
    let mut lo = x_min;
    let mut idx = 0;
    while lo <= x_max {
        let hi = lo.saturating_mul(2);
        let mut mass = 0u64;
        while idx < data.len() && data[idx].0 < hi {
            mass += data[idx].1;
            idx += 1;
        }
        if mass > 0 {
            // The last bin only covers integers up to the largest observed value.
            let top = (hi - 1).min(x_max);
            let width = T::from_count(top - lo + 1);
            let center = (T::from_count(lo) * T::from_count(top)).sqrt();
            let density = T::from_count(mass) / total / width;
            points.push((center.ln(), density.ln()));
        }
        if hi == u64::MAX {
            break;
        }
        lo = hi;
    }
    if points.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POINTS,
            found: points.len(),
        });
    }

    let n = T::from_usize(points.len()).unwrap();
    let mx = points.iter().fold(T::zero(), |s, p| s + p.0) / n;
    let my = points.iter().fold(T::zero(), |s, p| s + p.1) / n;
    let sxx = points.iter().fold(T::zero(), |s, p| s + (p.0 - mx) * (p.0 - mx));
    let sxy = points.iter().fold(T::zero(), |s, p| s + (p.0 - mx) * (p.1 - my));
    let syy = points.iter().fold(T::zero(), |s, p| s + (p.1 - my) * (p.1 - my));
    let slope = sxy / sxx;
    let r_squared = if syy == T::zero() {
        T::one()
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    let exponent = -slope;

    Ok(PowerLawFit {
        exponent,
        method: FitMethod::LogBinnedRegression,
        x_min,
        x_max,
        n_points: points.len(),
        n_samples,
        r_squared: Some(r_squared),
        log_likelihood: None,
        ks_distance: None,
        warning: (!decays(exponent)).then_some(FitWarning::NonDecaying),
    })
}

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (a + k)^(−s)` for `s > 1`, `a > 0`,
/// by Euler–Maclaurin summation.
pub fn hurwitz_zeta<T: Scalar>(s: T, a: T) -> T {
    const DIRECT: usize = 12;
    // B_{2j} / (2j)! for j = 1..=7.
    const COEF: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
        1.0 / 74_724_249_600.0,
    ];
    let one = T::one();
    let mut sum = T::zero();
    let mut x = a;
    for _ in 0..DIRECT {
        sum = sum + x.powf(-s);
        x = x + one;
    }
    let x_s = x.powf(-s);
    sum = sum + x * x_s / (s - one) + x_s / T::lit(2.0);
    // factor_j = s (s+1) … (s+2j−2) · x^(−s−2j+1)
    let inv_x2 = one / (x * x);
    let mut factor = s * x_s / x;
    for (j, &c) in COEF.iter().enumerate() {
        let term = T::lit(c) * factor;
        sum = sum + term;
        let j = T::from_usize(j + 1).unwrap();
        let two = T::lit(2.0);
        factor = factor * (s + two * j - one) * (s + two * j) * inv_x2;
    }
    sum
}

fn log_likelihood<T: Scalar>(alpha: T, x_min: u64, n: T, sum_log: T) -> T {
    -n * hurwitz_zeta(alpha, T::from_count(x_min)).ln() - alpha * sum_log
}

fn golden_max<T: Scalar>(f: impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0));
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Kolmogorov–Smirnov distance between the tail data and the discrete model.
fn ks_distance<T: Scalar>(data: &[(u64, u64)], alpha: T, x_min: u64) -> T {
    let n = T::from_count(data.iter().map(|&(_, c)| c).sum());
    let z0 = hurwitz_zeta(alpha, T::from_count(x_min));
    let model_cdf = |x: u64| T::one() - hurwitz_zeta(alpha, T::from_count(x + 1)) / z0;
    let mut seen = 0u64;
    let mut d = T::zero();
    for (i, &(x, c)) in data.iter().enumerate() {
        // Just below x the empirical CDF is still at its previous level.
        if x > x_min {
            let below = (T::from_count(seen) / n - model_cdf(x - 1)).abs();
            d = d.max(below);
        }
        seen += c;
        let emp = T::from_count(seen) / n;
        d = d.max((emp - model_cdf(x)).abs());
        // Between this value and the next observed one the model keeps rising.
        if let Some(&(next, _)) = data.get(i + 1) {
            if next > x + 1 {
                d = d.max((emp - model_cdf(next - 1)).abs());
            }
        }
    }
    d
}

/// Discrete MLE with a fixed `x_min`.
pub fn fit_mle_at<T: Scalar>(h: &Histogram, x_min: u64) -> Result<PowerLawFit<T>, FitError> {
    if x_min == 0 {
        return Err(FitError::InvalidXmin);
    }
    let data = tail(h, x_min);
    if data.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POINTS,
            found: data.len(),
        });
    }
    let n_samples: u64 = data.iter().map(|&(_, c)| c).sum();
    let n = T::from_count(n_samples);
    let sum_log = data
        .iter()
        .fold(T::zero(), |s, &(x, c)| s + T::from_count(c) * T::from_count(x).ln());

    let (lo, hi) = (T::lit(MLE_EXPONENT_RANGE.0), T::lit(MLE_EXPONENT_RANGE.1));
    let alpha = golden_max(|a| log_likelihood(a, x_min, n, sum_log), lo, hi);
    let edge = T::lit(1e-6);
    let warning = if alpha - lo < edge || hi - alpha < edge {
        Some(FitWarning::AtSearchBound)
    } else {
        None
    };

    Ok(PowerLawFit {
        exponent: alpha,
        method: FitMethod::DiscreteMle,
        x_min,
        x_max: data.last().unwrap().0,
        n_points: data.len(),
        n_samples,
        r_squared: None,
        log_likelihood: Some(log_likelihood(alpha, x_min, n, sum_log)),
        ks_distance: Some(ks_distance(&data, alpha, x_min)),
        warning,
    })
}

/// Discrete MLE with `x_min` chosen by minimum KS distance.
pub fn fit_mle_scan<T: Scalar>(h: &Histogram) -> Result<PowerLawFit<T>, FitError> {
    let keys: Vec<(u64, u64)> = h.iter().filter(|&(x, _)| x >= 1).collect();
    // Candidate i keeps keys[i..]; require enough distinct values and samples.
    let mut tail_samples = vec![0u64; keys.len() + 1];
    for i in (0..keys.len()).rev() {
        tail_samples[i] = tail_samples[i + 1] + keys[i].1;
    }
    let eligible: Vec<u64> = (0..keys.len())
        .filter(|&i| keys.len() - i >= MIN_POINTS && tail_samples[i] >= MIN_TAIL_SAMPLES)
        .map(|i| keys[i].0)
        .collect();
    if eligible.is_empty() {
        // Report the same error a fixed-x_min fit would.
        let x = keys.first().map(|k| k.0).unwrap_or(1);
        return fit_mle_at(h, x);
    }
    let candidates: Vec<u64> = if eligible.len() <= MAX_XMIN_CANDIDATES {
        eligible
    } else {
        let step = eligible.len() as f64 / MAX_XMIN_CANDIDATES as f64;
        let mut c: Vec<u64> = (0..MAX_XMIN_CANDIDATES)
            .map(|i| eligible[(i as f64 * step) as usize])
            .collect();
        c.dedup();
        c
    };

    let mut best: Option<PowerLawFit<T>> = None;
    for x in candidates {
        let fit = fit_mle_at::<T>(h, x)?;
        let better = match &best {
            None => true,
            Some(b) => fit.ks_distance.unwrap() < b.ks_distance.unwrap(),
        };
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one candidate"))
}
