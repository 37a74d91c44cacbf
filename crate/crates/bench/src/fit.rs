//! Training, reference sampling and correlation helpers shared by the pipelines.

use gradvar::linalg::{symmetric_eigenvalues, Matrix, DENSE_LIMIT};
use gradvar::nnet::param_count;
use gradvar::refpost::{hmc_run, HmcConfig, HmcSummary, PosteriorLogDensity, ReferenceMoments};
use gradvar::stats::{self, PairedSeries};
use gradvar::trainmap::{train_map, FitMetric, TrainReport};
use gradvar::uq::{empirical_fisher, DampedFisher, LabelMode};
use gradvar::{Dataset, MlpSpec, Params};

use crate::config::{sub_seed, BenchConfig};
use crate::error::{BenchError, Result};
use crate::problems::EvalSet;
use crate::report::{ExperimentReport, Metric};

/// A trained model together with its data.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub problem: String,
    pub spec: MlpSpec,
    pub data: Dataset,
    pub theta: Params,
    pub train: TrainReport,
}

impl Fitted {
    pub fn model(&self) -> String {
        self.spec.label()
    }

    pub fn dim(&self) -> usize {
        param_count(&self.spec)
    }

    /// Label for derived seeds, unique per problem and model.
    pub fn seed_label(&self, purpose: &str) -> String {
        format!("{purpose}/{}/{}", self.problem, self.model())
    }

    /// Adds `param_count` and the fit metric.
    pub fn push_rows(&self, report: &mut ExperimentReport) {
        let (p, m) = (self.problem.as_str(), self.model());
        report.push(p, &m, "", Metric::ParamCount, self.dim() as f64);
        match self.train.fit {
            FitMetric::Accuracy(a) => report.push(p, &m, "", Metric::Accuracy, a),
            FitMetric::Rmse(r) => report.push(p, &m, "", Metric::Rmse, r),
        }
    }
}

pub fn fit(problem: &str, spec: &MlpSpec, data: Dataset, cfg: &BenchConfig) -> Result<Fitted> {
    let seed = sub_seed(cfg.seed, &format!("train/{problem}/{}", spec.label()));
    let (theta, train) = train_map(spec, &data, &cfg.train_config(seed))?;
    log::info!(
        "{problem} {}: D={} loss={:.6} |grad|={:.2e} iters={} fit={:?}",
        spec.label(),
        param_count(spec),
        train.final_loss,
        train.final_grad_norm,
        train.iters_used,
        train.fit
    );
    Ok(Fitted { problem: problem.to_string(), spec: spec.clone(), data, theta, train })
}

/// Runs HMC on the model's posterior and accumulates reference moments on the evaluation set.
pub fn reference<'a>(fitted: &'a Fitted, eval: &'a EvalSet, cfg: &BenchConfig) -> Result<(ReferenceMoments<'a, f64>, HmcSummary)> {
    let hmc: HmcConfig = cfg.hmc_config(sub_seed(cfg.seed, &fitted.seed_label("hmc"))).for_dim(fitted.dim());
    let ld = PosteriorLogDensity::new(&fitted.spec, &fitted.data, cfg.train.lambda)?;
    let mut moments = ReferenceMoments::new(&fitted.spec, &eval.xs, eval.len())?;
    let summary = hmc_run(&ld, fitted.theta.as_slice(), &hmc, |_, th| moments.push(th))?;
    log::info!(
        "{} {}: {} draws, accept {:.3}, step {:.3e}",
        fitted.problem,
        fitted.model(),
        summary.draws,
        summary.accept_rate(),
        summary.adapted_step_size()
    );
    Ok((moments, summary))
}

pub fn push_sampler_rows(report: &mut ExperimentReport, fitted: &Fitted, summary: &HmcSummary) {
    let m = fitted.model();
    report.push(&fitted.problem, &m, "hmc", Metric::AcceptRate, summary.accept_rate());
    report.push(&fitted.problem, &m, "hmc", Metric::HmcDraws, summary.draws as f64);
}

/// Mean empirical Fisher at the MAP and the Laplace posterior precision
/// `n (F + lambda I)` of the `n`-sample posterior.
pub fn laplace_posterior(fitted: &Fitted, cfg: &BenchConfig) -> Result<(Matrix<f64>, DampedFisher<f64>)> {
    let f = empirical_fisher(&fitted.spec, &fitted.theta, &fitted.data, LabelMode::Observed, 0)?;
    let n = fitted.data.len() as f64;
    let post = DampedFisher::new(f.scaled(n), n * cfg.train.lambda)?;
    Ok((f, post))
}

/// Pearson and Spearman rows for `estimate` against `reference`.
pub fn push_correlations(report: &mut ExperimentReport, problem: &str, model: &str, estimator: &str, estimate: &[f64], reference: &[f64]) {
    let res = PairedSeries::new(estimate.to_vec(), reference.to_vec())
        .and_then(|s| Ok((stats::pearson(&s)?, stats::spearman(&s)?)));
    match res {
        Ok((r, rho)) => {
            log::info!("{problem} {model} {estimator}: pearson {r:.4} spearman {rho:.4}");
            report.push(problem, model, estimator, Metric::Pearson, r);
            report.push(problem, model, estimator, Metric::Spearman, rho);
        }
        Err(e) => report.push_error(problem, model, format!("{estimator}: {e}")),
    }
}

/// Extreme eigenvalues of `F + lambda I` and their ratio.
pub fn hessian_spectrum(fisher: &Matrix<f64>, lambda: f64) -> Result<(f64, f64, f64)> {
    let d = fisher.rows();
    if fisher.cols() != d {
        return Err(BenchError::Invalid(format!("Fisher must be square, got {d}x{}", fisher.cols())));
    }
    if d == 0 {
        return Err(BenchError::Invalid("empty Fisher".into()));
    }
    if d > DENSE_LIMIT {
        return Err(gradvar::Error::TooLarge { dim: d, limit: DENSE_LIMIT }.into());
    }
    let scale = fisher.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let asym = fisher.asymmetry()?;
    if asym > 1e-10 * scale {
        return Err(gradvar::Error::NotSymmetric(asym).into());
    }
    let eig = symmetric_eigenvalues(&fisher.add_diagonal(lambda), 1e-14)?;
    let (lo, hi) = (eig[0], eig[d - 1]);
    Ok((lo, hi, hi / lo))
}

/// Runs `body` and turns a failure into an error row.
pub fn isolate(report: &mut ExperimentReport, problem: &str, model: &str, body: impl FnOnce(&mut ExperimentReport) -> Result<()>) {
    let mut local = ExperimentReport::default();
    match body(&mut local) {
        Ok(()) => report.extend(local),
        Err(e) => {
            log::error!("{problem} {model}: {e}");
            report.push_error(problem, model, e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_examples() {
        assert_eq!(hessian_spectrum(&Matrix::zeros(3, 3), 1.0).unwrap(), (1.0, 1.0, 1.0));
        let (lo, hi, r) = hessian_spectrum(&Matrix::from_diagonal(&[1.0, 4.0]), 0.0).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 4.0).abs() < 1e-14 && (r - 4.0).abs() < 1e-13);
        let asym = Matrix::from_row_major(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(hessian_spectrum(&asym, 1.0).is_err());
    }

    #[test]
    fn isolate_keeps_partial_rows_out_on_failure() {
        let mut r = ExperimentReport::default();
        isolate(&mut r, "a", "m", |rep| {
            rep.push("a", "m", "gn", Metric::Pearson, 1.0);
            Err(BenchError::Invalid("boom".into()))
        });
        isolate(&mut r, "b", "m", |rep| {
            rep.push("b", "m", "gn", Metric::Pearson, 0.5);
            Ok(())
        });
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.errors().count(), 1);
        assert_eq!(r.value("b", None, "gn", Metric::Pearson), Some(0.5));
    }
}
