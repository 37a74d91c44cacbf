//! Delta-method uncertainty estimators.
//!
//! A first-order expansion of the predicted probability around `theta*` turns
//! the posterior variance of `p(y_c | x, theta)` into the quadratic form
//! `g^T Cov[theta] g`, with `g` the gradient of the prediction. Under an
//! isotropic covariance this is the squared gradient norm; under a damped
//! empirical Fisher it is the usual Laplace form `g^T (F + lambda I)^{-1} g`.
//! The aleatoric counterpart is the Bernoulli variance `p (1 - p)` of the
//! point prediction.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{batch_inv_quad_forms, Cholesky, Matrix, DENSE_LIMIT};
use crate::nnet::{self, GradientVector, Head, MlpSpec, ParamVector};
use crate::rng;
use crate::scalar::{sq_norm, Real};
use crate::synthgen::{LabeledDataset, Labels};

/// Default number of Gaussian draws for [`laplace_aleatoric`].
pub const DEFAULT_LAPLACE_DRAWS: usize = 512;

/// Points per batch when evaluating estimators over many inputs.
const EVAL_CHUNK: usize = 1024;

/// Squared gradient norm `|g|^2`: the epistemic estimate under `Cov = I`.
pub fn epistemic_gradient_norm<T: Real>(g: &GradientVector<T>) -> T {
    sq_norm(g.as_slice())
}

/// Bernoulli variance `p (1 - p)` of the point prediction.
pub fn aleatoric_point<T: Real>(p: T) -> Result<T> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::ProbabilityOutOfRange(p.to_f64_lossy()));
    }
    Ok(p * (T::one() - p))
}

/// Damped Fisher `F + lambda I`, factorised once.
#[derive(Debug, Clone)]
pub struct DampedFisher<T = f64> {
    fisher: Matrix<T>,
    damping: T,
    chol: Cholesky<T>,
}

impl<T: Real> DampedFisher<T> {
    pub fn new(fisher: Matrix<T>, damping: T) -> Result<Self> {
        if !(damping > T::zero()) {
            return Err(Error::InvalidArgument("damping must be positive".into()));
        }
        let scale = fisher.as_slice().iter().fold(T::one(), |m, v| m.max(v.abs()));
        let asym = fisher.asymmetry()?;
        if asym > T::lit(1e-10) * scale {
            return Err(Error::NotSymmetric(asym.to_f64_lossy()));
        }
        let chol = Cholesky::factor(&fisher.add_diagonal(damping))?;
        Ok(DampedFisher { fisher, damping, chol })
    }

    pub fn fisher(&self) -> &Matrix<T> {
        &self.fisher
    }

    pub fn damping(&self) -> T {
        self.damping
    }

    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    /// `g^T (F + lambda I)^{-1} g`.
    pub fn quad_form(&self, g: &[T]) -> Result<T> {
        if g.len() != self.chol.dim() {
            return Err(Error::DimensionMismatch { expected: self.chol.dim(), got: g.len() });
        }
        let q = self.chol.inv_quad_form(g);
        if !q.is_finite() {
            return Err(Error::NonFinite("Laplace quadratic form"));
        }
        Ok(q)
    }
}

/// Parameter covariance assumed by the delta-method estimate.
#[derive(Debug, Clone)]
pub enum CovarianceModel<T = f64> {
    /// `variance * I`; the ranking of estimates does not depend on `variance`.
    Isotropic { variance: T },
    /// `(F + lambda I)^{-1}`.
    DampedFisher(DampedFisher<T>),
}

impl<T: Real> CovarianceModel<T> {
    pub fn identity() -> Self {
        CovarianceModel::Isotropic { variance: T::one() }
    }

    pub fn damped_fisher(fisher: Matrix<T>, damping: T) -> Result<Self> {
        Ok(CovarianceModel::DampedFisher(DampedFisher::new(fisher, damping)?))
    }

    /// `g^T Cov g`.
    pub fn quad_form(&self, g: &GradientVector<T>) -> Result<T> {
        match self {
            CovarianceModel::Isotropic { variance } => Ok(*variance * epistemic_gradient_norm(g)),
            CovarianceModel::DampedFisher(df) => df.quad_form(g.as_slice()),
        }
    }

    /// `g_i^T Cov g_i` for each row of an `m x D` gradient matrix.
    fn batch_quad_forms(&self, rows: &[T], m: usize, lower_inverse: Option<&Matrix<T>>) -> Vec<T> {
        match self {
            CovarianceModel::Isotropic { variance } => {
                let d = rows.len() / m.max(1);
                rows.chunks_exact(d.max(1)).map(|r| *variance * sq_norm(r)).collect()
            }
            CovarianceModel::DampedFisher(_) => {
                batch_inv_quad_forms(lower_inverse.expect("lower inverse prepared"), rows, m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// Use the dataset's own labels.
    Observed,
    /// Draw labels from the model's predictive distribution.
    ModelSampled,
}

fn sample_labels<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, data: &LabeledDataset<T>, seed: u64) -> Result<Labels<T>> {
    let n = data.len();
    let mut rng = rng::stream(seed);
    let preds = nnet::predict_targets_batch(spec, params, &data.inputs, n)?;
    match spec.head {
        Head::Regression { noise_sd } => Ok(Labels::Value(
            preds.iter().map(|&m| m + T::lit(noise_sd) * rng::normal::<T, _>(&mut rng)).collect(),
        )),
        _ => {
            let k = spec.class_count();
            let ys = preds
                .chunks_exact(k)
                .map(|p| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    for (j, pj) in p.iter().enumerate() {
                        acc += pj.to_f64_lossy();
                        if u < acc {
                            return j;
                        }
                    }
                    k - 1
                })
                .collect();
            Ok(Labels::Class(ys))
        }
    }
}

/// Empirical Fisher `F = (1/n) sum_i grad l_i grad l_i^T` of the per-sample NLL.
pub fn empirical_fisher<T: Real>(
    spec: &MlpSpec,
    params: &ParamVector<T>,
    data: &LabeledDataset<T>,
    mode: LabelMode,
    seed: u64,
) -> Result<Matrix<T>> {
    let d = nnet::param_count(spec);
    if d > DENSE_LIMIT {
        return Err(Error::TooLarge { dim: d, limit: DENSE_LIMIT });
    }
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let sampled;
    let labels = match mode {
        LabelMode::Observed => &data.labels,
        LabelMode::ModelSampled => {
            sampled = sample_labels(spec, params, data, seed)?;
            &sampled
        }
    };
    let rows = nnet::per_sample_loss_grads(spec, params, &data.inputs, labels)?;
    Ok(Matrix::gram(&rows, n, d, T::lit(n as f64)))
}

/// `g^T (F + lambda I)^{-1} g` via a Cholesky solve.
pub fn laplace_epistemic<T: Real>(g: &GradientVector<T>, fisher: &Matrix<T>, damping: T) -> Result<T> {
    if fisher.rows() != g.len() {
        return Err(Error::DimensionMismatch { expected: fisher.rows(), got: g.len() });
    }
    DampedFisher::new(fisher.clone(), damping)?.quad_form(g.as_slice())
}

/// Draws `theta = theta* + L^{-T} z`, `z ~ N(0, I)`, where `L L^T` is the
/// precision factor; the draws are Gaussian with covariance `(L L^T)^{-1}`.
///
/// Each draw consumes `D` consecutive standard normals from the seeded stream.
pub fn laplace_posterior_draws<T: Real>(
    center: &ParamVector<T>,
    precision: &Cholesky<T>,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<ParamVector<T>>> {
    let d = center.len();
    if precision.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: precision.dim() });
    }
    let mut rng = rng::stream(seed);
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let z: Vec<T> = (0..d).map(|_| rng::normal::<T, _>(&mut rng)).collect();
        let offset = precision.solve_upper(&z);
        let theta: Vec<T> = center.as_slice().iter().zip(&offset).map(|(&c, &o)| c + o).collect();
        draws.push(ParamVector::from_vec_unchecked(theta));
    }
    Ok(draws)
}

/// Monte Carlo mean of `p(1 - p)` under `theta ~ N(theta*, (F + lambda I)^{-1})`.
#[allow(clippy::too_many_arguments)]
pub fn laplace_aleatoric<T: Real>(
    spec: &MlpSpec,
    theta_star: &ParamVector<T>,
    fisher: &Matrix<T>,
    damping: T,
    x: &[T],
    c: usize,
    n_draws: usize,
    seed: u64,
) -> Result<T> {
    let df = DampedFisher::new(fisher.clone(), damping)?;
    Ok(laplace_aleatoric_batch(spec, theta_star, &df, x, 1, c, n_draws, seed)?[0])
}

/// [`laplace_aleatoric`] for `n` inputs sharing one set of posterior draws.
#[allow(clippy::too_many_arguments)]
pub fn laplace_aleatoric_batch<T: Real>(
    spec: &MlpSpec,
    theta_star: &ParamVector<T>,
    posterior: &DampedFisher<T>,
    xs: &[T],
    n: usize,
    c: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be at least 1".into()));
    }
    if !spec.is_classifier() {
        return Err(Error::InvalidArgument("aleatoric estimates need a classification head".into()));
    }
    let draws = laplace_posterior_draws(theta_star, posterior.cholesky(), n_draws, seed)?;
    let k = spec.target_count();
    if c >= k {
        return Err(Error::InvalidClass { class: c, classes: k });
    }
    let mut acc = vec![T::zero(); n];
    for theta in &draws {
        let probs = nnet::predict_targets_batch(spec, theta, xs, n)?;
        for (a, p) in acc.iter_mut().zip(probs.chunks_exact(k)) {
            *a += p[c] * (T::one() - p[c]);
        }
    }
    let inv = T::one() / T::lit(n_draws as f64);
    Ok(acc.into_iter().map(|a| a * inv).collect())
}

/// Per-position gradients and probabilities of a generated sequence.
#[derive(Debug, Clone)]
pub struct SequenceGradients<T = f64> {
    per_token_grads: Vec<GradientVector<T>>,
    per_token_probs: Vec<T>,
}

impl<T: Real> SequenceGradients<T> {
    pub fn new(per_token_grads: Vec<GradientVector<T>>, per_token_probs: Vec<T>) -> Result<Self> {
        if per_token_grads.is_empty() {
            return Err(Error::InvalidArgument("sequence needs at least one token".into()));
        }
        if per_token_grads.len() != per_token_probs.len() {
            return Err(Error::DimensionMismatch { expected: per_token_grads.len(), got: per_token_probs.len() });
        }
        let d = per_token_grads[0].len();
        if let Some(bad) = per_token_grads.iter().find(|g| g.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        Ok(SequenceGradients { per_token_grads, per_token_probs })
    }

    pub fn len(&self) -> usize {
        self.per_token_grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_token_grads.is_empty()
    }

    pub fn grads(&self) -> &[GradientVector<T>] {
        &self.per_token_grads
    }

    pub fn probs(&self) -> &[T] {
        &self.per_token_probs
    }

    /// `g_bar = (1/T) sum_t g_t`.
    pub fn mean_gradient(&self) -> GradientVector<T> {
        let d = self.per_token_grads[0].len();
        let mut mean = vec![T::zero(); d];
        for g in &self.per_token_grads {
            for (m, &v) in mean.iter_mut().zip(g.as_slice()) {
                *m += v;
            }
        }
        let inv = T::one() / T::lit(self.len() as f64);
        mean.iter_mut().for_each(|m| *m *= inv);
        GradientVector::from_vec_unchecked(mean)
    }
}

/// `|g_bar|^2`, the sequence-level epistemic estimate.
pub fn sequence_epistemic<T: Real>(sg: &SequenceGradients<T>) -> T {
    epistemic_gradient_norm(&sg.mean_gradient())
}

/// Mean per-position Bernoulli variance.
pub fn sequence_aleatoric<T: Real>(sg: &SequenceGradients<T>) -> Result<T> {
    let mut acc = T::zero();
    for &p in sg.probs() {
        acc += aleatoric_point(p)?;
    }
    Ok(acc / T::lit(sg.len() as f64))
}

/// Regular evaluation grid over one or two input axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub xs: Vec<f64>,
    /// Empty for 1D grids.
    pub ys: Vec<f64>,
}

impl Grid {
    pub fn new_2d(x_range: (f64, f64), y_range: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        Ok(Grid { xs: linspace(x_range, nx)?, ys: linspace(y_range, ny)? })
    }

    pub fn new_1d(x_range: (f64, f64), nx: usize) -> Result<Self> {
        Ok(Grid { xs: linspace(x_range, nx)?, ys: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        if self.ys.is_empty() {
            1
        } else {
            2
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major points: `x` varies fastest, rows follow increasing `y`.
    pub fn points<T: Real>(&self) -> Vec<T> {
        if self.ys.is_empty() {
            return self.xs.iter().map(|&x| T::lit(x)).collect();
        }
        let mut pts = Vec::with_capacity(self.len() * 2);
        for &y in &self.ys {
            for &x in &self.xs {
                pts.push(T::lit(x));
                pts.push(T::lit(y));
            }
        }
        pts
    }
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lo.is_finite() && hi.is_finite()) || !(hi > lo) {
        return Err(Error::InvalidArgument(format!("grid axis needs resolution >= 2 and a finite range, got [{lo}, {hi}] x {n}")));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect())
}

/// Per-point uncertainty values over a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub grid_xs: Vec<f64>,
    pub grid_ys: Vec<f64>,
    /// Row-major, `max(|grid_ys|, 1) x |grid_xs|`; row `j` belongs to `grid_ys[j]`.
    pub values: Vec<f64>,
    pub estimator_name: String,
    pub normalized: bool,
    /// Set by [`normalize_map`] when the raw map had no spread (all zeros then).
    pub constant: bool,
}

impl UncertaintyMap {
    pub fn new(grid: &Grid, values: Vec<f64>, estimator_name: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("uncertainty map"));
        }
        Ok(UncertaintyMap {
            grid_xs: grid.xs.clone(),
            grid_ys: grid.ys.clone(),
            values,
            estimator_name: estimator_name.into(),
            normalized: false,
            constant: false,
        })
    }

    pub fn width(&self) -> usize {
        self.grid_xs.len()
    }

    pub fn height(&self) -> usize {
        self.grid_ys.len().max(1)
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width() + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    GradientNorm,
    Laplace,
    AleatoricPoint,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::GradientNorm => "gn",
            Estimator::Laplace => "laplace",
            Estimator::AleatoricPoint => "aleatoric-point",
        }
    }
}

/// Raw estimator values for `n` inputs and target `c`.
pub fn evaluate_estimator<T: Real>(
    spec: &MlpSpec,
    theta: &ParamVector<T>,
    xs: &[T],
    n: usize,
    estimator: Estimator,
    c: usize,
    cov: Option<&CovarianceModel<T>>,
) -> Result<Vec<T>> {
    let identity = CovarianceModel::identity();
    let cov = match (estimator, cov) {
        (Estimator::Laplace, Some(cov @ CovarianceModel::DampedFisher(_))) => cov,
        (Estimator::Laplace, _) => {
            return Err(Error::InvalidArgument("laplace estimator needs a damped-Fisher covariance".into()))
        }
        (Estimator::GradientNorm, None) => &identity,
        (Estimator::GradientNorm, Some(cov @ CovarianceModel::Isotropic { .. })) => cov,
        (Estimator::GradientNorm, Some(_)) => {
            return Err(Error::InvalidArgument("gradient-norm estimator takes an isotropic covariance".into()))
        }
        (Estimator::AleatoricPoint, _) => {
            if !spec.is_classifier() {
                return Err(Error::InvalidArgument("aleatoric estimates need a classification head".into()));
            }
            let k = spec.target_count();
            if c >= k {
                return Err(Error::InvalidClass { class: c, classes: k });
            }
            let probs = nnet::predict_targets_batch(spec, theta, xs, n)?;
            return probs.chunks_exact(k).map(|p| aleatoric_point(p[c])).collect();
        }
    };
    let lower_inverse = match cov {
        CovarianceModel::DampedFisher(df) => Some(df.cholesky().lower_inverse()),
        CovarianceModel::Isotropic { .. } => None,
    };
    let dim = spec.input_dim;
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let m = EVAL_CHUNK.min(n - start);
        let rows = nnet::grad_targets_batch(spec, theta, &xs[start * dim..(start + m) * dim], m, c)?;
        out.extend(cov.batch_quad_forms(&rows, m, lower_inverse.as_ref()));
    }
    Ok(out)
}

/// Evaluates `estimator` for target `c` at every grid point. Values are raw.
pub fn uncertainty_map<T: Real>(
    spec: &MlpSpec,
    theta: &ParamVector<T>,
    grid: &Grid,
    estimator: Estimator,
    c: usize,
    cov: Option<&CovarianceModel<T>>,
) -> Result<UncertaintyMap> {
    if grid.dim() != spec.input_dim {
        return Err(Error::DimensionMismatch { expected: spec.input_dim, got: grid.dim() });
    }
    let pts = grid.points::<T>();
    let vals = evaluate_estimator(spec, theta, &pts, grid.len(), estimator, c, cov)?;
    UncertaintyMap::new(grid, vals.into_iter().map(|v| v.to_f64_lossy()).collect(), estimator.name())
}

/// Min-max normalisation to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize_map(map: &UncertaintyMap) -> UncertaintyMap {
    let (lo, hi) = map.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut out = map.clone();
    out.normalized = true;
    let span = hi - lo;
    if !(span > 0.0) {
        out.values.iter_mut().for_each(|v| *v = 0.0);
        out.constant = true;
    } else {
        out.values.iter_mut().for_each(|v| *v = (*v - lo) / span);
        out.constant = false;
    }
    out
}
