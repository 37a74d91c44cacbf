//! Correlations, Welch's t-test, Cohen's d and percentile bootstrap intervals.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Two equal-length finite series of length at least 3.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PairedSeries {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
        }
        if xs.len() < 3 {
            return Err(Error::InvalidArgument(format!("paired series needs at least 3 points, got {}", xs.len())));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("paired series"));
        }
        Ok(PairedSeries { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn pearson_raw(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::Degenerate("correlation of a zero-variance series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation.
pub fn pearson(s: &PairedSeries) -> Result<f64> {
    pearson_raw(&s.xs, &s.ys)
}

/// 1-based ranks; ties share the mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson of the average-ranked series.
pub fn spearman(s: &PairedSeries) -> Result<f64> {
    pearson_raw(&average_ranks(&s.xs), &average_ranks(&s.ys))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub dof: f64,
}

fn check_sample(v: &[f64], name: &str) -> Result<()> {
    if v.len() < 2 {
        return Err(Error::InvalidArgument(format!("sample {name} needs at least 2 values")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("test sample"));
    }
    Ok(())
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    if !(va > 0.0 && vb > 0.0) {
        return Err(Error::Degenerate("Welch test on a zero-variance sample".into()));
    }
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let dof = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult { t, p: student_t_two_sided(t, dof), dof })
}

/// `(mean a - mean b) / s_pooled`, with `s_pooled^2` the `n - 1`-weighted mean of the variances.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0);
    if !(pooled > 0.0) {
        return Err(Error::Degenerate("Cohen's d with zero pooled standard deviation".into()));
    }
    Ok((mean(a) - mean(b)) / pooled.sqrt())
}

/// `P(|T| >= |t|)` for Student's t with `dof` degrees of freedom.
pub fn student_t_two_sided(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(0.5 * dof, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BootstrapStatistic<'a> {
    Mean,
    /// `mean(values) / mean(denominators)`, resampling pairs jointly.
    RatioOfMeans { denominators: &'a [f64] },
}

impl BootstrapStatistic<'_> {
    fn eval(&self, values: &[f64], idx: impl Iterator<Item = usize> + Clone) -> f64 {
        let n = idx.clone().count() as f64;
        let num = idx.clone().map(|i| values[i]).sum::<f64>() / n;
        match self {
            BootstrapStatistic::Mean => num,
            BootstrapStatistic::RatioOfMeans { denominators } => num / (idx.map(|i| denominators[i]).sum::<f64>() / n),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval at confidence `level`.
pub fn bootstrap_ci(values: &[f64], statistic: BootstrapStatistic<'_>, n_resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidArgument("n_resamples must be at least 1".into()));
    }
    if let BootstrapStatistic::RatioOfMeans { denominators } = statistic {
        if denominators.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: values.len(), got: denominators.len() });
        }
    }
    let n = values.len();
    let mut rng = rng::stream(seed);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
        stats.push(statistic.eval(values, idx.iter().copied()));
    }
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - level);
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

/// Point value of `statistic` on the full sample.
pub fn statistic_value(values: &[f64], statistic: BootstrapStatistic<'_>) -> f64 {
    statistic.eval(values, 0..values.len())
}
