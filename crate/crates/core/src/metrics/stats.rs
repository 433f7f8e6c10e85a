use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MetricError;
use crate::rng::{self, Domain};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<S> {
    pub n: usize,
    pub mean: S,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub sd: S,
    pub min: S,
    pub max: S,
}

pub fn mean<S: Real>(xs: &[S]) -> Result<S, MetricError> {
    if xs.is_empty() {
        return Err(MetricError::Empty("sample"));
    }
    Ok(xs.iter().fold(S::zero(), |acc, &x| acc + x) / S::from_count(xs.len()))
}

pub fn sample_variance<S: Real>(xs: &[S]) -> Result<S, MetricError> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Ok(S::zero());
    }
    let ss = xs.iter().fold(S::zero(), |acc, &x| acc + (x - m) * (x - m));
    Ok(ss / S::from_count(xs.len() - 1))
}

pub fn summary<S: Real>(xs: &[S]) -> Result<Summary<S>, MetricError> {
    let mean = mean(xs)?;
    Ok(Summary {
        n: xs.len(),
        mean,
        sd: sample_variance(xs)?.sqrt(),
        min: xs.iter().copied().fold(S::infinity(), S::min),
        max: xs.iter().copied().fold(S::neg_infinity(), S::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest<S> {
    pub t: S,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: S,
    /// Two-sided p-value.
    pub p: S,
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t_test<S: Real>(a: &[S], b: &[S]) -> Result<WelchTest<S>, MetricError> {
    for (xs, what) in [(a, "first sample"), (b, "second sample")] {
        if xs.len() < 2 {
            return Err(MetricError::TooFew {
                what,
                need: 2,
                got: xs.len(),
            });
        }
    }
    let (ma, mb) = (mean(a)?, mean(b)?);
    let (va, vb) = (sample_variance(a)?, sample_variance(b)?);
    let (na, nb) = (S::from_count(a.len()), S::from_count(b.len()));
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let diff = ma - mb;
    if se2 == S::zero() {
        // both samples constant
        let df = na + nb - S::from_int(2);
        return Ok(if diff == S::zero() {
            WelchTest {
                t: S::zero(),
                df,
                p: S::one(),
            }
        } else {
            WelchTest {
                t: diff.signum() * S::infinity(),
                df,
                p: S::zero(),
            }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - S::one()) + sb * sb / (nb - S::one()));
    let p = if t == S::zero() {
        1.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, df.approx_f64())
            .map_err(|_| MetricError::InvalidParameter("degrees of freedom"))?;
        (2.0 * dist.cdf(-t.abs().approx_f64())).min(1.0)
    };
    Ok(WelchTest {
        t,
        df,
        p: S::from_f64(p).ok_or(MetricError::Overflow)?,
    })
}

/// Pearson product-moment correlation.
pub fn pearson_r<S: Real>(a: &[S], b: &[S]) -> Result<S, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooFew {
            what: "paired sample",
            need: 2,
            got: a.len(),
        });
    }
    let (ma, mb) = (mean(a)?, mean(b)?);
    let (mut sxy, mut sxx, mut syy) = (S::zero(), S::zero(), S::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == S::zero() || syy == S::zero() {
        return Err(MetricError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).max(-S::one()).min(S::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// mean +/- 1.96 sd / sqrt(n)
    #[default]
    Normal,
    /// Percentile bootstrap with 1000 seeded resamples.
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub fn mean_ci(xs: &[f64], method: CiMethod, seed: u64) -> Result<MeanCi, MetricError> {
    let m = mean(xs)?;
    let (low, high) = match method {
        CiMethod::Normal => {
            let half = 1.96 * sample_variance(xs)?.sqrt() / (xs.len() as f64).sqrt();
            (m - half, m + half)
        }
        CiMethod::Bootstrap => {
            let mut rng = rng::stream(seed, Domain::Bootstrap, xs.len() as u64);
            let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
                .map(|_| {
                    (0..xs.len())
                        .map(|_| xs[rng.random_range(0..xs.len())])
                        .sum::<f64>()
                        / xs.len() as f64
                })
                .collect();
            means.sort_by(f64::total_cmp);
            let at = |q: f64| means[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round()) as usize];
            (at(0.025), at(0.975))
        }
    };
    Ok(MeanCi {
        n: xs.len(),
        mean: m,
        low,
        high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let w = welch_t_test(&a, &a).unwrap();
        assert_eq!(w.t, 0.0);
        assert_eq!(w.p, 1.0);
    }

    #[test]
    fn welch_reference_values() {
        // scipy.stats.ttest_ind(a, b, equal_var=False)
        let a: [f64; 10] = [19.8, 20.4, 19.6, 17.8, 18.5, 18.9, 18.3, 18.9, 19.5, 22.0];
        let b: [f64; 20] = [
            28.2, 26.6, 20.1, 23.3, 25.2, 22.1, 17.7, 27.6, 20.6, 13.7, 23.2, 17.5, 20.6, 18.0,
            23.9, 21.6, 24.3, 20.4, 23.9, 13.3,
        ];
        let w = welch_t_test(&a, &b).unwrap();
        assert!((w.t - -2.225512039969852).abs() < 1e-9, "{}", w.t);
        assert!((w.df - 24.524634944257343).abs() < 1e-9, "{}", w.df);
        assert!((w.p - 0.035484530830010325).abs() < 1e-9, "{}", w.p);
    }

    #[test]
    fn constant_samples() {
        let w = welch_t_test::<f64>(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!(w.p, 0.0);
        assert!(w.t.is_infinite() && w.t < 0.0);
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(
            pearson_r(&[1.0, 1.0], &[1.0, 2.0]),
            Err(MetricError::UndefinedCorrelation)
        ));
        assert!(pearson_r(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn summary_stats() {
        let s = summary(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.n), (2.5, 1.0, 4.0, 4));
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(summary(&[7.0]).unwrap().sd, 0.0);
    }

    #[test]
    fn degenerate_ci_has_zero_width() {
        let ci = mean_ci(&[20.0; 15], CiMethod::Normal, 0).unwrap();
        assert_eq!((ci.mean, ci.low, ci.high), (20.0, 20.0, 20.0));
        let ci = mean_ci(&[20.0; 15], CiMethod::Bootstrap, 0).unwrap();
        assert_eq!((ci.low, ci.high), (20.0, 20.0));
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let xs: Vec<f64> = (0..50).map(f64::from).collect();
        let ci = mean_ci(&xs, CiMethod::Bootstrap, 3).unwrap();
        assert!(ci.low < ci.mean && ci.mean < ci.high);
        assert_eq!(ci, mean_ci(&xs, CiMethod::Bootstrap, 3).unwrap());
    }
}
