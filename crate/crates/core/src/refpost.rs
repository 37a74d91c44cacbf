//! Hamiltonian Monte Carlo reference posteriors.
//!
//! Leapfrog HMC with an identity mass matrix and a fixed, jittered trajectory
//! length. The step size is tuned per chain during warmup by dual averaging
//! and frozen at its averaged value for sampling.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nnet::{self, MlpSpec, ParamVector};
use crate::rng;
use crate::scalar::{sq_norm, Real};
use crate::synthgen::{LabeledDataset, Labels};

/// Unnormalised log density with its gradient.
pub trait LogDensity<T: Real> {
    fn dim(&self) -> usize;

    /// Returns `log p(theta)` and writes its gradient into `grad`.
    /// Non-finite values are allowed and are treated as divergences.
    fn log_density_grad(&self, theta: &[T], grad: &mut [T]) -> Result<T>;
}

/// Log posterior of an MLP: `-n * loss(theta)`, i.e. the summed log
/// likelihood minus `(n lambda / 2) |theta|^2`.
///
/// `lambda` is the weight decay of the mean training loss, so the mode of
/// this density is exactly the MAP point found by training.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorLogDensity<'a, T = f64> {
    spec: &'a MlpSpec,
    data: &'a LabeledDataset<T>,
    prior_precision: T,
}

impl<'a, T: Real> PosteriorLogDensity<'a, T> {
    pub fn new(spec: &'a MlpSpec, data: &'a LabeledDataset<T>, prior_precision: T) -> Result<Self> {
        if !(prior_precision > T::zero()) {
            return Err(Error::InvalidArgument("prior precision must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.dim != spec.input_dim {
            return Err(Error::DimensionMismatch { expected: spec.input_dim, got: data.dim });
        }
        if matches!(data.labels, Labels::Class(_)) != spec.is_classifier() {
            return Err(Error::InvalidArgument("dataset labels do not match the model head".into()));
        }
        Ok(PosteriorLogDensity { spec, data, prior_precision })
    }

    pub fn log_density(&self, theta: &ParamVector<T>) -> Result<T> {
        let n = T::lit(self.data.len() as f64);
        Ok(-n * nnet::loss(self.spec, theta, self.data, self.prior_precision)?)
    }
}

impl<T: Real> LogDensity<T> for PosteriorLogDensity<'_, T> {
    fn dim(&self) -> usize {
        nnet::param_count(self.spec)
    }

    fn log_density_grad(&self, theta: &[T], grad: &mut [T]) -> Result<T> {
        let params = ParamVector::new(self.spec, theta.to_vec())?;
        let (loss, g) = nnet::grad_loss(self.spec, &params, self.data, self.prior_precision)?;
        let n = T::lit(self.data.len() as f64);
        for (o, &v) in grad.iter_mut().zip(g.as_slice()) {
            *o = -n * v;
        }
        Ok(-n * loss)
    }
}

/// Gaussian `N(0, diag(scales^2))`.
#[derive(Debug, Clone)]
pub struct DiagonalGaussian {
    pub scales: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn standard(dim: usize) -> Self {
        DiagonalGaussian { scales: vec![1.0; dim] }
    }
}

impl<T: Real> LogDensity<T> for DiagonalGaussian {
    fn dim(&self) -> usize {
        self.scales.len()
    }

    fn log_density_grad(&self, theta: &[T], grad: &mut [T]) -> Result<T> {
        let mut lp = T::zero();
        for ((g, &x), &s) in grad.iter_mut().zip(theta).zip(&self.scales) {
            let prec = T::lit(1.0 / (s * s));
            *g = -prec * x;
            lp -= T::lit(0.5) * prec * x * x;
        }
        Ok(lp)
    }
}

/// Dimension above which [`HmcConfig::for_dim`] halves the kept draws.
pub const LARGE_DIM: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub warmup_iters: usize,
    pub sample_iters: usize,
    pub chains: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    pub seed: u64,
    /// Relative half-width of the uniform per-iteration step-size jitter.
    pub step_jitter: f64,
    /// Standard deviation of the Gaussian perturbation of the initial point.
    pub init_jitter_sd: f64,
    /// Keep every `thin`-th post-warmup state; `sample_iters` counts kept draws.
    pub thin: usize,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            warmup_iters: 1000,
            sample_iters: 1000,
            chains: 4,
            leapfrog_steps: 32,
            target_accept: 0.8,
            seed: 0,
            step_jitter: 0.2,
            init_jitter_sd: 0.1,
            thin: 1,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.warmup_iters == 0 || self.sample_iters == 0 || self.chains == 0 || self.leapfrog_steps == 0 || self.thin == 0 {
            return bad("HMC iteration counts must all be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return bad("step_jitter must lie in [0, 1)");
        }
        if !(self.init_jitter_sd >= 0.0) {
            return bad("init_jitter_sd must be non-negative");
        }
        Ok(())
    }

    /// Applies the default budget reduction: half the kept draws above [`LARGE_DIM`].
    pub fn for_dim(&self, dim: usize) -> Self {
        let mut c = self.clone();
        if dim > LARGE_DIM {
            c.sample_iters = (c.sample_iters / 2).max(1);
        }
        c
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.sample_iters
    }
}

/// Per-chain diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    /// Mean Metropolis acceptance probability over sampling iterations.
    pub accept_rate: f64,
    pub step_size: f64,
    pub mean_log_density: f64,
    pub warmup_divergences: usize,
    pub sampling_divergences: usize,
}

/// Pooled diagnostics of an HMC run.
#[derive(Debug, Clone, PartialEq)]
pub struct HmcSummary {
    pub chains: Vec<ChainStats>,
    pub draws: usize,
}

impl HmcSummary {
    pub fn accept_rate(&self) -> f64 {
        self.chains.iter().map(|c| c.accept_rate).sum::<f64>() / self.chains.len() as f64
    }

    pub fn adapted_step_size(&self) -> f64 {
        self.chains.iter().map(|c| c.step_size).sum::<f64>() / self.chains.len() as f64
    }

    pub fn per_chain_mean_log_density(&self) -> Vec<f64> {
        self.chains.iter().map(|c| c.mean_log_density).collect()
    }
}

/// Draws from [`hmc_sample`], `S x D` row-major with chains concatenated.
#[derive(Debug, Clone)]
pub struct PosteriorSamples<T = f64> {
    pub draws: Matrix<T>,
    pub accept_rate: f64,
    pub adapted_step_size: f64,
    pub per_chain_mean_log_density: Vec<f64>,
    pub summary: HmcSummary,
}

impl<T: Real> PosteriorSamples<T> {
    pub fn len(&self) -> usize {
        self.draws.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.cols()
    }

    pub fn draw(&self, s: usize) -> ParamVector<T> {
        ParamVector::from_vec_unchecked(self.draws.row(s).to_vec())
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for s in 0..self.len() {
            for (a, v) in m.iter_mut().zip(self.draws.row(s)) {
                *a += v.to_f64_lossy();
            }
        }
        m.iter_mut().for_each(|a| *a /= self.len() as f64);
        m
    }

    /// Unbiased sample covariance, `D x D`.
    pub fn covariance(&self) -> Matrix<f64> {
        let (s, d) = (self.len(), self.dim());
        let mean = self.mean();
        let mut centered = Vec::with_capacity(s * d);
        for i in 0..s {
            centered.extend(self.draws.row(i).iter().zip(&mean).map(|(v, m)| v.to_f64_lossy() - m));
        }
        Matrix::gram(&centered, s, d, (s - 1) as f64)
    }
}

struct Chain<'a, T, L> {
    ld: &'a L,
    theta: Vec<T>,
    grad: Vec<T>,
    lp: T,
    momentum: Vec<T>,
    prop_theta: Vec<T>,
    prop_grad: Vec<T>,
}

impl<'a, T: Real, L: LogDensity<T>> Chain<'a, T, L> {
    fn new(ld: &'a L, theta: Vec<T>) -> Result<Self> {
        let d = theta.len();
        let mut grad = vec![T::zero(); d];
        let lp = ld.log_density_grad(&theta, &mut grad)?;
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("log density at the HMC starting point"));
        }
        Ok(Chain { ld, theta, grad, lp, momentum: vec![T::zero(); d], prop_theta: vec![T::zero(); d], prop_grad: vec![T::zero(); d] })
    }

    fn resample_momentum<R: Rng>(&mut self, rng: &mut R) {
        self.momentum.iter_mut().for_each(|p| *p = rng::normal(rng));
    }

    /// Integrates from the current state with the current momentum; returns
    /// the log acceptance ratio (`-inf` on divergence) and the proposal's log density.
    fn leapfrog(&mut self, eps: T, steps: usize) -> Result<(f64, T)> {
        let half = T::lit(0.5) * eps;
        let h0 = -self.lp + T::lit(0.5) * sq_norm(&self.momentum);
        self.prop_theta.copy_from_slice(&self.theta);
        self.prop_grad.copy_from_slice(&self.grad);
        let mut lp = self.lp;
        for _ in 0..steps {
            for (p, &g) in self.momentum.iter_mut().zip(&self.prop_grad) {
                *p += half * g;
            }
            for (x, &p) in self.prop_theta.iter_mut().zip(&self.momentum) {
                *x += eps * p;
            }
            lp = self.ld.log_density_grad(&self.prop_theta, &mut self.prop_grad)?;
            if !lp.is_finite() {
                return Ok((f64::NEG_INFINITY, lp));
            }
            for (p, &g) in self.momentum.iter_mut().zip(&self.prop_grad) {
                *p += half * g;
            }
        }
        let h1 = -lp + T::lit(0.5) * sq_norm(&self.momentum);
        let log_ratio = (h0 - h1).to_f64_lossy();
        Ok((if log_ratio.is_finite() { log_ratio } else { f64::NEG_INFINITY }, lp))
    }

    fn accept(&mut self, lp: T) {
        std::mem::swap(&mut self.theta, &mut self.prop_theta);
        std::mem::swap(&mut self.grad, &mut self.prop_grad);
        self.lp = lp;
    }

    /// Doubling/halving search for a step size with one-step acceptance near 0.5.
    fn initial_step_size<R: Rng>(&mut self, rng: &mut R) -> Result<f64> {
        let mut eps = 1.0;
        self.resample_momentum(rng);
        let p0 = self.momentum.clone();
        let (mut log_r, _) = self.leapfrog(T::lit(eps), 1)?;
        let dir: f64 = if log_r > 0.5f64.ln() { 1.0 } else { -1.0 };
        for _ in 0..100 {
            if !(dir * log_r > -dir * 2f64.ln()) {
                break;
            }
            eps *= 2f64.powf(dir);
            self.momentum.copy_from_slice(&p0);
            log_r = self.leapfrog(T::lit(eps), 1)?.0;
        }
        Ok(eps)
    }
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    m: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        DualAveraging { mu: (10.0 * eps0).ln(), h_bar: 0.0, log_eps_bar: 0.0, m: 0.0, target }
    }

    /// Records one acceptance statistic and returns the next step size.
    fn update(&mut self, alpha: f64) -> f64 {
        self.m += 1.0;
        let w = 1.0 / (self.m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - alpha);
        let log_eps = self.mu - self.m.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.m.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step_size(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

fn run_chain<T: Real, L: LogDensity<T>>(
    ld: &L,
    init: &[T],
    config: &HmcConfig,
    chain: usize,
    sink: &mut dyn FnMut(usize, &[T]) -> Result<()>,
) -> Result<ChainStats> {
    let mut rng = rng::stream(rng::derive_seed(config.seed, chain as u64));
    let sd = T::lit(config.init_jitter_sd);
    let start: Vec<T> = init.iter().map(|&v| v + sd * rng::normal::<T, _>(&mut rng)).collect();
    let mut st = Chain::new(ld, start)?;
    let mut eps = st.initial_step_size(&mut rng)?;
    let mut da = DualAveraging::new(eps, config.target_accept);
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng| 1.0 + config.step_jitter * (2.0 * rng.random::<f64>() - 1.0);

    let mut warm_div = 0;
    for it in 0..config.warmup_iters {
        st.resample_momentum(&mut rng);
        let (log_r, lp) = st.leapfrog(T::lit(eps * jitter(&mut rng)), config.leapfrog_steps)?;
        if log_r == f64::NEG_INFINITY {
            warm_div += 1;
            if 2 * warm_div > config.warmup_iters {
                return Err(Error::SamplerAborted(format!(
                    "chain {chain}: {warm_div} of the first {} warmup iterations diverged (step size {eps:.3e})",
                    it + 1
                )));
            }
        }
        let alpha = log_r.min(0.0).exp();
        if rng.random::<f64>() < alpha {
            st.accept(lp);
        }
        eps = da.update(alpha);
    }
    eps = da.final_step_size();

    let mut accept_sum = 0.0;
    let mut lp_sum = 0.0;
    let mut sample_div = 0;
    let total = config.sample_iters * config.thin;
    for it in 0..total {
        st.resample_momentum(&mut rng);
        let (log_r, lp) = st.leapfrog(T::lit(eps * jitter(&mut rng)), config.leapfrog_steps)?;
        if log_r == f64::NEG_INFINITY {
            sample_div += 1;
        }
        let alpha = log_r.min(0.0).exp();
        if rng.random::<f64>() < alpha {
            st.accept(lp);
        }
        accept_sum += alpha;
        lp_sum += st.lp.to_f64_lossy();
        if (it + 1) % config.thin == 0 {
            sink(chain, &st.theta)?;
        }
    }
    Ok(ChainStats {
        accept_rate: accept_sum / total as f64,
        step_size: eps,
        mean_log_density: lp_sum / total as f64,
        warmup_divergences: warm_div,
        sampling_divergences: sample_div,
    })
}

/// Runs every chain and passes each kept draw to `sink(chain, theta)`.
///
/// Chains run one after another, each from its own derived stream, so the
/// output does not depend on scheduling.
pub fn hmc_run<T: Real, L: LogDensity<T>>(
    ld: &L,
    init: &[T],
    config: &HmcConfig,
    mut sink: impl FnMut(usize, &[T]) -> Result<()>,
) -> Result<HmcSummary> {
    config.validate()?;
    if init.len() != ld.dim() {
        return Err(Error::DimensionMismatch { expected: ld.dim(), got: init.len() });
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("HMC initial point"));
    }
    let mut chains = Vec::with_capacity(config.chains);
    for c in 0..config.chains {
        chains.push(run_chain(ld, init, config, c, &mut sink)?);
    }
    Ok(HmcSummary { chains, draws: config.total_draws() })
}

/// Runs HMC and keeps all draws in memory.
pub fn hmc_sample<T: Real, L: LogDensity<T>>(ld: &L, init: &[T], config: &HmcConfig) -> Result<PosteriorSamples<T>> {
    let d = init.len();
    let mut data = Vec::with_capacity(config.total_draws() * d);
    let summary = hmc_run(ld, init, config, |_, theta| {
        data.extend_from_slice(theta);
        Ok(())
    })?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("HMC draws"));
    }
    let draws = Matrix::from_row_major(config.total_draws(), d, data)?;
    Ok(PosteriorSamples {
        draws,
        accept_rate: summary.accept_rate(),
        adapted_step_size: summary.adapted_step_size(),
        per_chain_mean_log_density: summary.per_chain_mean_log_density(),
        summary,
    })
}

fn draw_probs<T: Real>(samples: &PosteriorSamples<T>, spec: &MlpSpec, x: &[T], c: usize) -> Result<Vec<T>> {
    if !spec.is_classifier() {
        return Err(Error::InvalidArgument("reference probabilities need a classification head".into()));
    }
    (0..samples.len()).map(|s| nnet::predict_prob(spec, &samples.draw(s), x, c)).collect()
}

fn unbiased_variance<T: Real>(vals: &[T]) -> T {
    let n = T::lit(vals.len() as f64);
    let mean = vals.iter().copied().sum::<T>() / n;
    vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one())
}

/// Unbiased sample variance of `p(y_c | x, theta_s)` over the draws.
pub fn ref_epistemic<T: Real>(samples: &PosteriorSamples<T>, spec: &MlpSpec, x: &[T], c: usize) -> Result<T> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 draws, got {}", samples.len())));
    }
    Ok(unbiased_variance(&draw_probs(samples, spec, x, c)?))
}

/// Sample mean of `p (1 - p)` over the draws.
pub fn ref_aleatoric<T: Real>(samples: &PosteriorSamples<T>, spec: &MlpSpec, x: &[T], c: usize) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no posterior draws".into()));
    }
    let probs = draw_probs(samples, spec, x, c)?;
    Ok(probs.iter().map(|&p| p * (T::one() - p)).sum::<T>() / T::lit(probs.len() as f64))
}

/// Streaming reference moments over a fixed set of evaluation points.
///
/// Accumulates, per point and target, the mean and unbiased variance of the
/// prediction (Welford) and, for classifiers, the mean of `p (1 - p)`.
#[derive(Debug, Clone)]
pub struct ReferenceMoments<'a, T = f64> {
    spec: &'a MlpSpec,
    xs: &'a [T],
    n: usize,
    k: usize,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    bernoulli: Vec<f64>,
}

impl<'a, T: Real> ReferenceMoments<'a, T> {
    pub fn new(spec: &'a MlpSpec, xs: &'a [T], n: usize) -> Result<Self> {
        if xs.len() != n * spec.input_dim {
            return Err(Error::DimensionMismatch { expected: n * spec.input_dim, got: xs.len() });
        }
        let k = spec.target_count();
        Ok(ReferenceMoments { spec, xs, n, k, count: 0, mean: vec![0.0; n * k], m2: vec![0.0; n * k], bernoulli: vec![0.0; n * k] })
    }

    pub fn push(&mut self, theta: &[T]) -> Result<()> {
        let params = ParamVector::new(self.spec, theta.to_vec())?;
        let preds = nnet::predict_targets_batch(self.spec, &params, self.xs, self.n)?;
        self.count += 1;
        let cnt = self.count as f64;
        for (i, p) in preds.iter().enumerate() {
            let p = p.to_f64_lossy();
            let delta = p - self.mean[i];
            self.mean[i] += delta / cnt;
            self.m2[i] += delta * (p - self.mean[i]);
            self.bernoulli[i] += p * (1.0 - p);
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn targets(&self) -> usize {
        self.k
    }

    /// Unbiased variance of target `c` at each point.
    pub fn epistemic(&self, c: usize) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 draws, got {}", self.count)));
        }
        self.check_target(c)?;
        Ok((0..self.n).map(|i| self.m2[i * self.k + c] / (self.count - 1) as f64).collect())
    }

    /// Mean of `p_c (1 - p_c)` at each point.
    pub fn aleatoric(&self, c: usize) -> Result<Vec<f64>> {
        if !self.spec.is_classifier() {
            return Err(Error::InvalidArgument("aleatoric reference needs a classification head".into()));
        }
        if self.count == 0 {
            return Err(Error::InvalidArgument("no posterior draws".into()));
        }
        self.check_target(c)?;
        Ok((0..self.n).map(|i| self.bernoulli[i * self.k + c] / self.count as f64).collect())
    }

    pub fn predictive_mean(&self, c: usize) -> Result<Vec<f64>> {
        self.check_target(c)?;
        Ok((0..self.n).map(|i| self.mean[i * self.k + c]).collect())
    }

    fn check_target(&self, c: usize) -> Result<()> {
        if c >= self.k {
            return Err(Error::InvalidClass { class: c, classes: self.k });
        }
        Ok(())
    }
}

/// Writes draws as a `HMC1 S D seed` header line followed by little-endian
/// `f64` values, row-major.
pub fn write_draws<T: Real>(path: &Path, draws: &Matrix<T>, seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "HMC1 {} {} {}", draws.rows(), draws.cols(), seed)?;
    for v in draws.as_slice() {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_draws`]; returns the draws and the seed.
pub fn read_draws(path: &Path) -> Result<(Matrix<f64>, u64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let fields: Vec<&str> = header.trim_end_matches('\n').split(' ').collect();
    let bad = || Error::Io(format!("malformed draw dump header: {:?}", header.trim_end()));
    if fields.len() != 4 || fields[0] != "HMC1" {
        return Err(bad());
    }
    let s: usize = fields[1].parse().map_err(|_| bad())?;
    let d: usize = fields[2].parse().map_err(|_| bad())?;
    let seed: u64 = fields[3].parse().map_err(|_| bad())?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != s * d * 8 {
        return Err(Error::Io(format!("draw dump payload has {} bytes, expected {}", bytes.len(), s * d * 8)));
    }
    let vals = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect();
    Ok((Matrix::from_row_major(s, d, vals)?, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> HmcConfig {
        HmcConfig { warmup_iters: 200, sample_iters: 200, chains: 2, leapfrog_steps: 8, ..Default::default() }
    }

    #[test]
    fn config_validation() {
        assert!(HmcConfig::default().validate().is_ok());
        for cfg in [
            HmcConfig { sample_iters: 0, ..Default::default() },
            HmcConfig { warmup_iters: 0, ..Default::default() },
            HmcConfig { chains: 0, ..Default::default() },
            HmcConfig { target_accept: 1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert_eq!(HmcConfig::default().for_dim(LARGE_DIM).sample_iters, 1000);
        assert_eq!(HmcConfig::default().for_dim(LARGE_DIM + 1).sample_iters, 500);
    }

    #[test]
    fn deterministic_given_seed() {
        let ld = DiagonalGaussian::standard(3);
        let a = hmc_sample::<f64, _>(&ld, &[0.0; 3], &small_cfg()).unwrap();
        let b = hmc_sample::<f64, _>(&ld, &[0.0; 3], &small_cfg()).unwrap();
        assert_eq!(a.draws, b.draws);
        let c = hmc_sample::<f64, _>(&ld, &[0.0; 3], &HmcConfig { seed: 1, ..small_cfg() }).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn adapts_to_scale() {
        let ld = DiagonalGaussian { scales: vec![0.01, 0.01] };
        let s = hmc_sample::<f64, _>(&ld, &[0.0; 2], &small_cfg()).unwrap();
        assert!(s.adapted_step_size < 0.05, "{}", s.adapted_step_size);
        assert!((s.accept_rate - 0.8).abs() < 0.15, "{}", s.accept_rate);
    }

    #[test]
    fn reference_values() {
        let spec = MlpSpec::binary(1, &[]);
        // logit = w x + b evaluated at x = 0 gives sigmoid(b)
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let draws = Matrix::from_row_major(2, 2, vec![0.0, logit(0.2), 0.0, logit(0.8)]).unwrap();
        let summary = HmcSummary { chains: vec![], draws: 2 };
        let s = PosteriorSamples { draws, accept_rate: 1.0, adapted_step_size: 1.0, per_chain_mean_log_density: vec![], summary };
        assert!((ref_epistemic(&s, &spec, &[0.0], 1).unwrap() - 0.18).abs() < 1e-12);
        assert!((ref_aleatoric(&s, &spec, &[0.0], 1).unwrap() - 0.16).abs() < 1e-12);
        let mut acc = ReferenceMoments::new(&spec, &[0.0, 1.0], 2).unwrap();
        for i in 0..2 {
            acc.push(s.draws.row(i)).unwrap();
        }
        assert!((acc.epistemic(1).unwrap()[0] - 0.18).abs() < 1e-12);
        assert!((acc.aleatoric(1).unwrap()[0] - 0.16).abs() < 1e-12);
        let one = PosteriorSamples { draws: Matrix::from_row_major(1, 2, vec![0.0, 0.0]).unwrap(), ..s };
        assert!(ref_epistemic(&one, &spec, &[0.0], 1).is_err());
        assert!((ref_aleatoric(&one, &spec, &[0.0], 1).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn draw_dump_round_trip() {
        let dir = std::env::temp_dir().join(format!("gradvar-dump-{}", std::process::id()));
        let m = Matrix::from_row_major(2, 3, vec![1.0, -2.5, 3.25, 0.0, 1e-300, -7.0]).unwrap();
        write_draws(&dir, &m, 42).unwrap();
        let bytes = std::fs::read(&dir).unwrap();
        assert!(bytes.starts_with(b"HMC1 2 3 42\n"));
        assert_eq!(bytes.len(), "HMC1 2 3 42\n".len() + 48);
        let (back, seed) = read_draws(&dir).unwrap();
        std::fs::remove_file(&dir).unwrap();
        assert_eq!(back, m);
        assert_eq!(seed, 42);
    }
}
