//! Experiment pipelines. Every pipeline is a pure function of the configuration.

use gradvar::linalg::DENSE_LIMIT;
use gradvar::nnet::param_count;
use gradvar::refpost::{hmc_sample, DiagonalGaussian};
use gradvar::stats;
use gradvar::synthgen::split_by_halfplane;
use gradvar::uq::{
    empirical_fisher, evaluate_estimator, laplace_aleatoric_batch, normalize_map, uncertainty_map, CovarianceModel,
    Estimator, LabelMode, UncertaintyMap,
};
use gradvar::MlpSpec;

use crate::config::{sub_seed, BenchConfig};
use crate::error::{BenchError, Result};
use crate::fit::{fit, hessian_spectrum, isolate, laplace_posterior, push_correlations, push_sampler_rows, reference};
use crate::problems::{EvalGrid, EvalSet, Problem};
use crate::report::{ExperimentReport, Metric};

/// A map produced by a pipeline, keyed by problem and name.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMap {
    pub problem: String,
    pub name: String,
    pub map: UncertaintyMap,
}

impl NamedMap {
    /// File stem such as `xor_gn`.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.problem, self.name).replace(['@', '/', ' '], "-")
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub report: ExperimentReport,
    pub maps: Vec<NamedMap>,
}

fn new_report(cfg: &BenchConfig) -> ExperimentReport {
    ExperimentReport::new(cfg.entries(), cfg.seed)
}

fn require(problems: &[Problem], allowed: &[Problem], what: &str) -> Result<()> {
    match problems.iter().find(|p| !allowed.contains(p)) {
        Some(p) => Err(BenchError::Invalid(format!("{what} does not support problem `{p}`"))),
        None => Ok(()),
    }
}

/// Targets compared for a classifier: the positive class for binary heads, every class otherwise.
fn target_classes(spec: &MlpSpec) -> Vec<usize> {
    if spec.class_count() == 2 {
        vec![1]
    } else {
        (0..spec.target_count()).collect()
    }
}

/// GN, Laplace and aleatoric estimators against HMC on classification problems.
pub fn run_validation_classification(problems: &[Problem], cfg: &BenchConfig) -> Result<ExperimentReport> {
    require(problems, &Problem::CLASSIFICATION, "classification validation")?;
    let mut report = new_report(cfg);
    for &problem in problems {
        let spec = problem.validation_model(cfg);
        isolate(&mut report, problem.name(), &spec.label(), |rep| validate_classifier(problem, &spec, cfg, rep));
    }
    Ok(report)
}

fn validate_classifier(problem: Problem, spec: &MlpSpec, cfg: &BenchConfig, report: &mut ExperimentReport) -> Result<()> {
    let fitted = fit(problem.name(), spec, problem.training_data(cfg)?, cfg)?;
    fitted.push_rows(report);
    let eval = EvalSet::build(problem, &fitted.data, cfg)?;
    let (moments, summary) = reference(&fitted, &eval, cfg)?;
    push_sampler_rows(report, &fitted, &summary);
    let (_, post) = laplace_posterior(&fitted, cfg)?;
    let cov = CovarianceModel::DampedFisher(post);
    let CovarianceModel::DampedFisher(post) = &cov else { unreachable!() };
    let (p, m) = (problem.name(), fitted.model());
    let n = eval.len();
    let classes = target_classes(spec);
    let per_class = classes.len() > 1;
    let la_seed = sub_seed(cfg.seed, &fitted.seed_label("laplace"));
    let names = ["gn", "la", "gn_vs_la", "aleatoric_pe", "aleatoric_la"];
    let mut pooled: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); names.len()];
    for &c in &classes {
        let gn = evaluate_estimator(spec, &fitted.theta, &eval.xs, n, Estimator::GradientNorm, c, None)?;
        let la = evaluate_estimator(spec, &fitted.theta, &eval.xs, n, Estimator::Laplace, c, Some(&cov))?;
        let ale = evaluate_estimator(spec, &fitted.theta, &eval.xs, n, Estimator::AleatoricPoint, c, None)?;
        let ale_la = laplace_aleatoric_batch(spec, &fitted.theta, post, &eval.xs, n, c, cfg.laplace_draws, la_seed)?;
        let ref_epi = moments.epistemic(c)?;
        let ref_ale = moments.aleatoric(c)?;
        let pairs = [(&gn, &ref_epi), (&la, &ref_epi), (&gn, &la), (&ale, &ref_ale), (&ale_la, &ref_ale)];
        for (i, (est, refv)) in pairs.into_iter().enumerate() {
            if per_class {
                push_correlations(report, p, &m, &format!("{}@c{c}", names[i]), est, refv);
            }
            pooled[i].0.extend_from_slice(est);
            pooled[i].1.extend_from_slice(refv);
        }
    }
    for (name, (est, refv)) in names.iter().zip(&pooled) {
        push_correlations(report, p, &m, name, est, refv);
    }
    Ok(())
}

/// GN and Laplace against HMC on the two regression problems, plus the damped Fisher spectrum.
pub fn run_validation_regression(cfg: &BenchConfig) -> Result<ExperimentReport> {
    let mut report = new_report(cfg);
    for problem in Problem::REGRESSION {
        let spec = problem.validation_model(cfg);
        isolate(&mut report, problem.name(), &spec.label(), |rep| validate_regression(problem, &spec, cfg, rep));
    }
    Ok(report)
}

fn validate_regression(problem: Problem, spec: &MlpSpec, cfg: &BenchConfig, report: &mut ExperimentReport) -> Result<()> {
    let fitted = fit(problem.name(), spec, problem.training_data(cfg)?, cfg)?;
    fitted.push_rows(report);
    let (p, m) = (problem.name(), fitted.model());
    let (fisher, post) = laplace_posterior(&fitted, cfg)?;
    let (lo, hi, ratio) = hessian_spectrum(&fisher, cfg.train.lambda)?;
    report.push(p, &m, "fisher", Metric::EigMin, lo);
    report.push(p, &m, "fisher", Metric::EigMax, hi);
    report.push(p, &m, "fisher", Metric::EigRatio, ratio);
    let eval = EvalSet::build(problem, &fitted.data, cfg)?;
    let (moments, summary) = reference(&fitted, &eval, cfg)?;
    push_sampler_rows(report, &fitted, &summary);
    let cov = CovarianceModel::DampedFisher(post);
    let n = eval.len();
    let gn = evaluate_estimator(spec, &fitted.theta, &eval.xs, n, Estimator::GradientNorm, 0, None)?;
    let la = evaluate_estimator(spec, &fitted.theta, &eval.xs, n, Estimator::Laplace, 0, Some(&cov))?;
    let ref_epi = moments.epistemic(0)?;
    push_correlations(report, p, &m, "gn", &gn, &ref_epi);
    push_correlations(report, p, &m, "la", &la, &ref_epi);
    push_correlations(report, p, &m, "gn_vs_la", &gn, &la);
    Ok(())
}

/// Binary models of increasing size for the scaling study; width 0 is logistic regression.
pub fn scaling_ladder(cfg: &BenchConfig) -> Vec<MlpSpec> {
    cfg.scaling_widths.0.iter().map(|&w| if w == 0 { MlpSpec::binary(2, &[]) } else { MlpSpec::binary(2, &[w, w]) }).collect()
}

/// GN epistemic and point aleatoric against HMC on binary rings, per model.
pub fn run_scaling(ladder: &[MlpSpec], cfg: &BenchConfig) -> Result<ExperimentReport> {
    if ladder.windows(2).any(|w| param_count(&w[0]) > param_count(&w[1])) {
        return Err(BenchError::Invalid("model ladder must be ordered by parameter count".into()));
    }
    if let Some(s) = ladder.iter().find(|s| s.input_dim != 2 || s.class_count() != 2) {
        return Err(BenchError::Invalid(format!("scaling needs binary 2D models, got {}", s.label())));
    }
    let problem = Problem::RingsBinary;
    let mut report = new_report(cfg);
    let data = problem.training_data(cfg)?;
    let eval = EvalSet::build(problem, &data, cfg)?;
    for spec in ladder {
        isolate(&mut report, problem.name(), &spec.label(), |rep| {
            let fitted = fit(problem.name(), spec, data.clone(), cfg)?;
            fitted.push_rows(rep);
            let (moments, summary) = reference(&fitted, &eval, cfg)?;
            push_sampler_rows(rep, &fitted, &summary);
            let (p, m) = (problem.name(), fitted.model());
            let n = eval.len();
            let gn = evaluate_estimator(spec, &fitted.theta, &eval.xs, n, Estimator::GradientNorm, 1, None)?;
            let ale = evaluate_estimator(spec, &fitted.theta, &eval.xs, n, Estimator::AleatoricPoint, 1, None)?;
            push_correlations(rep, p, &m, "gn", &gn, &moments.epistemic(1)?);
            push_correlations(rep, p, &m, "aleatoric_pe", &ale, &moments.aleatoric(1)?);
            Ok(())
        });
    }
    Ok(report)
}

fn is_top(v: f64, threshold: f64) -> bool {
    v > threshold
}

/// Mean over top cells divided by mean over bottom cells along `axis`.
pub fn ratio_top_bottom(map: &UncertaintyMap, axis: usize, threshold: f64) -> Result<f64> {
    let (top, bottom) = split_cells(map, axis, threshold, |v| v)?;
    Ok(stats::mean(&top) / stats::mean(&bottom))
}

fn split_cells(map: &UncertaintyMap, axis: usize, threshold: f64, f: impl Fn(f64) -> f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut top, mut bottom) = (Vec::new(), Vec::new());
    for row in 0..map.height() {
        for col in 0..map.width() {
            let coord = if axis == 0 { map.grid_xs[col] } else { map.grid_ys[row] };
            let v = f(map.get(col, row));
            if is_top(coord, threshold) {
                top.push(v);
            } else {
                bottom.push(v);
            }
        }
    }
    if top.len() < 2 || bottom.len() < 2 {
        return Err(gradvar::Error::DegenerateSplit(format!("{} top / {} bottom grid cells", top.len(), bottom.len())).into());
    }
    Ok((top, bottom))
}

/// Maps under the identity covariance and under Fishers estimated from each half of the data.
pub fn run_proxy_bias(problems: &[Problem], cfg: &BenchConfig) -> Result<PipelineOutput> {
    require(problems, &Problem::PROXY, "proxy-bias")?;
    let mut out = PipelineOutput { report: new_report(cfg), maps: Vec::new() };
    for &problem in problems {
        let spec = MlpSpec::binary(2, &[cfg.proxy.width, cfg.proxy.width]);
        let mut maps = Vec::new();
        isolate(&mut out.report, problem.name(), &spec.label(), |rep| {
            maps = proxy_problem(problem, &spec, cfg, rep)?;
            Ok(())
        });
        out.maps.extend(maps);
    }
    Ok(out)
}

fn proxy_problem(problem: Problem, spec: &MlpSpec, cfg: &BenchConfig, report: &mut ExperimentReport) -> Result<Vec<NamedMap>> {
    let fitted = fit(problem.name(), spec, problem.training_data(cfg)?, cfg)?;
    fitted.push_rows(report);
    let (p, m) = (problem.name(), fitted.model());
    let (axis, thr) = (cfg.proxy.axis, cfg.proxy.threshold);
    let (top, bottom) = split_by_halfplane(&fitted.data, axis, thr)?;
    let (half_a, half_b) = if cfg.proxy.swap { (bottom, top) } else { (top, bottom) };
    let lambda = cfg.train.lambda;
    let fisher = |half| -> Result<CovarianceModel<f64>> {
        let f = empirical_fisher(spec, &fitted.theta, half, LabelMode::Observed, 0)?;
        Ok(CovarianceModel::damped_fisher(f, lambda)?)
    };
    let (cov_a, cov_b) = (fisher(&half_a)?, fisher(&half_b)?);
    let grid = EvalGrid::around(&fitted.data, cfg.eval.expand, cfg.proxy.grid)?.to_grid()?;
    let raw_id = uncertainty_map(spec, &fitted.theta, &grid, Estimator::GradientNorm, 1, None)?;
    let raw_a = uncertainty_map(spec, &fitted.theta, &grid, Estimator::Laplace, 1, Some(&cov_a))?;
    let raw_b = uncertainty_map(spec, &fitted.theta, &grid, Estimator::Laplace, 1, Some(&cov_b))?;
    let log_ratio: Vec<f64> = raw_a.values.iter().zip(&raw_b.values).map(|(a, b)| a.ln() - b.ln()).collect();
    let log_ratio = UncertaintyMap::new(&grid, log_ratio, "log_ratio")?;
    let (u_id, u_a, u_b) = (normalize_map(&raw_id), normalize_map(&raw_a), normalize_map(&raw_b));
    for (name, u) in [("id", &u_id), ("A", &u_a), ("B", &u_b)] {
        report.push(p, &m, name, Metric::RatioTopBottom, ratio_top_bottom(u, axis, thr)?);
    }
    let (lr_top, lr_bottom) = split_cells(&log_ratio, axis, thr, |v| v)?;
    let w = stats::welch_t(&lr_top, &lr_bottom)?;
    let d = stats::cohens_d(&lr_top, &lr_bottom)?;
    report.push(p, &m, "log_ratio", Metric::WelchT, w.t);
    report.push(p, &m, "log_ratio", Metric::WelchP, w.p);
    report.push(p, &m, "log_ratio", Metric::CohensD, d);
    log::info!("{p} {m}: welch t {:.3} p {:.3e} d {d:.3}", w.t, w.p);
    let named = |name: &str, map: UncertaintyMap| NamedMap { problem: p.to_string(), name: name.to_string(), map };
    Ok(vec![named("id", u_id), named("A", u_a), named("B", u_b), named("log_ratio", log_ratio)])
}

/// Normalized GN, Laplace and aleatoric maps of each problem's validation model.
pub fn run_maps(problems: &[Problem], cfg: &BenchConfig) -> Result<PipelineOutput> {
    require(problems, &Problem::CLASSIFICATION, "map")?;
    let mut out = PipelineOutput { report: new_report(cfg), maps: Vec::new() };
    for &problem in problems {
        let spec = problem.validation_model(cfg);
        let mut maps = Vec::new();
        isolate(&mut out.report, problem.name(), &spec.label(), |rep| {
            let fitted = fit(problem.name(), &spec, problem.training_data(cfg)?, cfg)?;
            fitted.push_rows(rep);
            let grid = EvalGrid::around(&fitted.data, cfg.eval.expand, cfg.map_grid)?.to_grid()?;
            let cov = if fitted.dim() <= DENSE_LIMIT { Some(CovarianceModel::DampedFisher(laplace_posterior(&fitted, cfg)?.1)) } else { None };
            let classes = target_classes(&spec);
            for &c in &classes {
                let suffix = if classes.len() > 1 { format!("@c{c}") } else { String::new() };
                let mut ests = vec![(Estimator::GradientNorm, None), (Estimator::AleatoricPoint, None)];
                if cov.is_some() {
                    ests.push((Estimator::Laplace, cov.as_ref()));
                }
                for (est, cm) in ests {
                    let raw = uncertainty_map(&spec, &fitted.theta, &grid, est, c, cm)?;
                    maps.push(NamedMap { problem: problem.name().into(), name: format!("{}{suffix}", est.name()), map: normalize_map(&raw) });
                }
            }
            Ok(())
        });
        out.maps.extend(maps);
    }
    Ok(out)
}

/// Outcome of the sampler check on a 2D standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub mean_error: f64,
    pub cov_error: f64,
    pub accept_rate: f64,
    pub draws: usize,
}

impl Calibration {
    pub const MEAN_TOL: f64 = 0.05;
    pub const COV_TOL: f64 = 0.1;
    pub const ACCEPT_RANGE: (f64, f64) = (0.7, 0.9);

    pub fn passed(&self) -> bool {
        self.mean_error < Self::MEAN_TOL
            && self.cov_error < Self::COV_TOL
            && (Self::ACCEPT_RANGE.0..=Self::ACCEPT_RANGE.1).contains(&self.accept_rate)
    }
}

/// Samples a 2D standard normal with the configured sampler and reports the largest moment errors.
pub fn hmc_calibration(cfg: &BenchConfig) -> Result<(Calibration, ExperimentReport)> {
    let hmc = cfg.hmc_config(sub_seed(cfg.seed, "hmc/gaussian-2d"));
    let s = hmc_sample::<f64, _>(&DiagonalGaussian::standard(2), &[0.0, 0.0], &hmc)?;
    let mean = s.mean();
    let cov = s.covariance();
    let mean_error = mean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut cov_error = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            cov_error = cov_error.max((cov.get(i, j) - want).abs());
        }
    }
    let cal = Calibration { mean_error, cov_error, accept_rate: s.accept_rate, draws: s.len() };
    let mut report = new_report(cfg);
    report.push("gaussian-2d", "standard-normal", "hmc", Metric::AcceptRate, cal.accept_rate);
    report.push("gaussian-2d", "standard-normal", "hmc", Metric::HmcDraws, cal.draws as f64);
    if !cal.passed() {
        report.push_error("gaussian-2d", "standard-normal", format!("calibration failed: {cal:?}"));
    }
    Ok((cal, report))
}
