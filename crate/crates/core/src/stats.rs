//! Empirical distributions: summaries, quantiles, empirical CFs and
//! Kolmogorov-Smirnov distances.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleSet {
    values: Vec<f64>,
    sorted: bool,
}

impl SampleSet {
    /// Rejects NaN; infinities are kept.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return param("sample contains NaN");
        }
        Ok(Self { values, sorted: false })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn sort(&mut self) {
        if !self.sorted {
            self.values.sort_by(f64::total_cmp);
            self.sorted = true;
        }
    }

    pub fn sorted(mut self) -> Self {
        self.sort();
        self
    }

    fn sorted_view(&self) -> std::borrow::Cow<'_, [f64]> {
        if self.sorted {
            std::borrow::Cow::Borrowed(&self.values)
        } else {
            let mut v = self.values.clone();
            v.sort_by(f64::total_cmp);
            std::borrow::Cow::Owned(v)
        }
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.values.is_empty() {
            return param("empty sample");
        }
        Ok(())
    }
}

impl FromIterator<f64> for SampleSet {
    /// Panics on NaN.
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect()).expect("NaN in sample")
    }
}

/// `sqrt(−ln(α/2)/2)`, the asymptotic Kolmogorov critical factor.
pub fn kolmogorov_factor(alpha: f64) -> f64 {
    (-(0.5 * alpha).ln() / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub n1: usize,
    pub n2: Option<usize>,
}

impl KsReport {
    /// Rejection threshold at level `alpha`.
    pub fn threshold_at(&self, alpha: f64) -> f64 {
        let n1 = self.n1 as f64;
        let eff = match self.n2 {
            Some(n2) => {
                let n2 = n2 as f64;
                (n1 + n2) / (n1 * n2)
            }
            None => 1.0 / n1,
        };
        kolmogorov_factor(alpha) * eff.sqrt()
    }
}

/// Exact two-sample KS distance by merge scan; ties are stepped over together.
pub fn ks_two_sample(x: &SampleSet, y: &SampleSet) -> Result<KsReport> {
    x.require_nonempty()?;
    y.require_nonempty()?;
    let (xs, ys) = (x.sorted_view(), y.sorted_view());
    let (n1, n2) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = xs[i].min(ys[j]);
        while i < n1 && xs[i] <= v {
            i += 1;
        }
        while j < n2 && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    Ok(KsReport { statistic: d.min(1.0), n1, n2: Some(n2) })
}

/// One-sample KS distance against a continuous CDF.
pub fn ks_one_sample<F: FnMut(f64) -> f64>(x: &SampleSet, mut cdf: F) -> Result<KsReport> {
    x.require_nonempty()?;
    let xs = x.sorted_view();
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in xs.iter().enumerate() {
        let f = cdf(v);
        let hi = (i + 1) as f64 / n;
        let lo = i as f64 / n;
        d = d.max((hi - f).abs()).max((lo - f).abs());
    }
    Ok(KsReport { statistic: d.min(1.0), n1: xs.len(), n2: None })
}

/// Empirical CF value with componentwise standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfEstimate {
    pub theta: f64,
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
}

impl CfEstimate {
    /// Mean and standard error of a complex sample, componentwise.
    pub fn from_complex(theta: f64, samples: impl IntoIterator<Item = Complex64>) -> Result<Self> {
        let (mut re, mut im) = (Summary::default(), Summary::default());
        for z in samples {
            re.push(z.re);
            im.push(z.im);
        }
        if re.count == 0 {
            return param("empty sample");
        }
        Ok(Self {
            theta,
            value: Complex64::new(re.mean, im.mean),
            se_re: re.standard_error(),
            se_im: im.standard_error(),
        })
    }

    /// Largest of the real and imaginary deviations in units of the
    /// combined standard error of two independent estimates.
    pub fn z_score_against(&self, other: &CfEstimate) -> f64 {
        let d = self.value - other.value;
        let z = |diff: f64, a: f64, b: f64| {
            let se = (a * a + b * b).sqrt();
            if se == 0.0 {
                if diff == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                diff.abs() / se
            }
        };
        z(d.re, self.se_re, other.se_re).max(z(d.im, self.se_im, other.se_im))
    }

    /// The same, against an exact value.
    pub fn z_score_exact(&self, exact: Complex64) -> f64 {
        self.z_score_against(&CfEstimate { theta: self.theta, value: exact, se_re: 0.0, se_im: 0.0 })
    }
}

pub fn empirical_cf(x: &SampleSet, thetas: &[f64]) -> Result<Vec<CfEstimate>> {
    x.require_nonempty()?;
    thetas
        .iter()
        .map(|&theta| CfEstimate::from_complex(theta, x.values.iter().map(|&v| Complex64::from_polar(1.0, theta * v))))
        .collect()
}

/// Count, mean and centered second moment, mergeable in any order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
}

impl Summary {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Summary) -> Summary {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        Summary {
            count: self.count + other.count,
            mean: (na * self.mean + nb * other.mean) / n,
            m2: self.m2 + other.m2 + d * d * na * nb / n,
        }
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Summary {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Summary::default();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Quantile with linear interpolation between order statistics (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return param("empty sample");
    }
    if !(0.0..=1.0).contains(&q) {
        return param(format!("quantile level {q} outside [0, 1]"));
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
    /// `(level, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
}

pub const DEFAULT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

pub fn summarize(x: &SampleSet, levels: &[f64]) -> Result<SampleSummary> {
    x.require_nonempty()?;
    let moments: Summary = x.values.iter().copied().collect();
    let sorted = x.sorted_view();
    let quantiles = levels
        .iter()
        .map(|&q| Ok((q, quantile_sorted(&sorted, q)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSummary {
        count: moments.count,
        mean: moments.mean,
        variance: moments.variance(),
        median: quantile_sorted(&sorted, 0.5)?,
        quantiles,
    })
}
