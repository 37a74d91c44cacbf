//! MAP estimation by full-batch Adam on the regularised loss.

use crate::error::{Error, Result};
use crate::nnet::{self, MlpSpec, ParamVector};
use crate::scalar::{sq_norm, Real};
use crate::synthgen::{LabeledDataset, Labels};

/// Loss values above this are treated as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    FullBatchAdam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Gaussian prior precision / weight decay `lambda` on the mean loss.
    pub prior_precision: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_size: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            prior_precision: 1e-2,
            max_iters: 5000,
            grad_tol: 1e-5,
            step_size: 1e-2,
            optimizer: Optimizer::FullBatchAdam,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMetric {
    Accuracy(f64),
    Rmse(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub iters_used: usize,
    pub converged: bool,
    pub fit: FitMetric,
}

impl TrainReport {
    pub fn accuracy(&self) -> Option<f64> {
        match self.fit {
            FitMetric::Accuracy(a) => Some(a),
            FitMetric::Rmse(_) => None,
        }
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(d: usize) -> Self {
        Adam { m: vec![T::zero(); d], v: vec![T::zero(); d], t: 0 }
    }

    fn step(&mut self, theta: &mut [T], grad: &[T], lr: T) {
        self.t += 1;
        let (b1, b2) = (T::lit(Self::BETA1), T::lit(Self::BETA2));
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let eps = T::lit(Self::EPS);
        for ((th, &g), (m, v)) in theta.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *th -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

fn check_compatible<T: Real>(spec: &MlpSpec, data: &LabeledDataset<T>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim != spec.input_dim {
        return Err(Error::DimensionMismatch { expected: spec.input_dim, got: data.dim });
    }
    match (&data.labels, spec.is_classifier()) {
        (Labels::Class(_), true) | (Labels::Value(_), false) => Ok(()),
        _ => Err(Error::InvalidArgument("dataset labels do not match the model head".into())),
    }
}

/// Minimises `mean NLL + (lambda/2)|theta|^2` from `init_params(spec, seed)`.
///
/// Stops once the gradient norm drops to `grad_tol`; otherwise returns the
/// lowest-loss iterate seen within `max_iters` updates.
pub fn train_map<T: Real>(spec: &MlpSpec, data: &LabeledDataset<T>, config: &TrainConfig) -> Result<(ParamVector<T>, TrainReport)> {
    check_compatible(spec, data)?;
    if !(config.grad_tol > 0.0) || !(config.step_size > 0.0) || !(config.prior_precision >= 0.0) {
        return Err(Error::InvalidArgument("train config needs grad_tol > 0, step_size > 0, lambda >= 0".into()));
    }
    let lambda = T::lit(config.prior_precision);
    let lr = T::lit(config.step_size);
    let mut theta = nnet::init_params::<T>(spec, config.seed);
    let mut adam = Adam::new(theta.len());

    let (mut loss, mut grad) = nnet::grad_loss(spec, &theta, data, lambda)?;
    if !loss.is_finite() || loss.to_f64_lossy() > DIVERGENCE_LOSS {
        return Err(Error::Diverged { iteration: 0, loss: loss.to_f64_lossy(), last_finite: Vec::new() });
    }
    let mut best = (loss, theta.clone(), sq_norm(grad.as_slice()).sqrt());
    let mut iters = 0;
    let mut converged = false;
    while iters < config.max_iters {
        let gnorm = sq_norm(grad.as_slice()).sqrt();
        if gnorm.to_f64_lossy() <= config.grad_tol {
            converged = true;
            break;
        }
        adam.step(theta.as_mut_slice(), grad.as_slice(), lr);
        iters += 1;
        let (l, g) = nnet::grad_loss(spec, &theta, data, lambda)?;
        if !l.is_finite() || l.to_f64_lossy() > DIVERGENCE_LOSS || !theta.is_finite() {
            return Err(Error::Diverged {
                iteration: iters,
                loss: l.to_f64_lossy(),
                last_finite: best.1.as_slice().iter().map(|v| v.to_f64_lossy()).collect(),
            });
        }
        loss = l;
        grad = g;
        if loss < best.0 {
            best = (loss, theta.clone(), sq_norm(grad.as_slice()).sqrt());
        }
    }
    if !converged && sq_norm(grad.as_slice()).sqrt().to_f64_lossy() <= config.grad_tol {
        converged = true;
    }
    let (final_loss, final_theta, final_gnorm) = if converged { (loss, theta, sq_norm(grad.as_slice()).sqrt()) } else { best };
    let fit = match nnet::fit_metric(spec, &final_theta, data)? {
        m if spec.is_classifier() => FitMetric::Accuracy(m),
        m => FitMetric::Rmse(m),
    };
    let report = TrainReport {
        final_loss: final_loss.to_f64_lossy(),
        final_grad_norm: final_gnorm.to_f64_lossy(),
        iters_used: iters,
        converged,
        fit,
    };
    Ok((final_theta, report))
}
