//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p gradvar-bench --test acceptance` runs everything;
//! trailing numbers (`-- 2 5 11`) select criteria.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gradvar::nnet::{self, GradientVector, ParamVector};
use gradvar::synthgen::{LabeledDataset, Labels};
use gradvar::uq::{self, CovarianceModel, Estimator, Grid, SequenceGradients};
use gradvar::{rng, stats, Head, MlpSpec, Params};
use gradvar_bench::{
    hmc_calibration, run_proxy_bias, run_scaling, run_validation_classification, run_validation_regression, scaling_ladder,
    write_output, BenchConfig, ExperimentReport, Metric, Problem,
};
use rand::Rng;

type Check = std::result::Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn num(r: &ExperimentReport, problem: &str, estimator: &str, metric: Metric) -> std::result::Result<f64, String> {
    r.value(problem, None, estimator, metric).ok_or_else(|| {
        let errs: Vec<String> = r.errors().map(|e| e.value_text()).collect();
        format!("missing {problem}/{estimator}/{metric} (errors: {errs:?})")
    })
}

// 1 -------------------------------------------------------------------------

const FD_STEP: f64 = 1e-4;

fn random_spec(r: &mut impl Rng, classifier: bool) -> MlpSpec {
    let input = r.random_range(1..=3);
    let widths: Vec<usize> = (0..r.random_range(0..=2)).map(|_| r.random_range(1..=6)).collect();
    match r.random_range(0..if classifier { 2 } else { 3 }) {
        0 => MlpSpec::binary(input, &widths),
        1 => MlpSpec::softmax(input, &widths, r.random_range(2..=4)),
        _ => MlpSpec::regression(input, &widths, r.random_range(0.2..1.5)),
    }
}

fn random_params(spec: &MlpSpec, r: &mut impl Rng) -> Params {
    let d = nnet::param_count(spec);
    ParamVector::new(spec, (0..d).map(|_| r.random_range(-1.2..1.2)).collect()).unwrap()
}

fn central_difference(theta: &Params, f: impl Fn(&Params) -> f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let (mut plus, mut minus) = (theta.clone(), theta.clone());
            plus.as_mut_slice()[i] += FD_STEP;
            minus.as_mut_slice()[i] -= FD_STEP;
            (f(&plus) - f(&minus)) / (2.0 * FD_STEP)
        })
        .collect()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-7)
}

fn gradient_correctness() -> Check {
    let mut r = rng::stream(101);
    let cases = 120;
    let mut worst_prob: f64 = 0.0;
    let mut worst_loss: f64 = 0.0;
    for _ in 0..cases {
        let spec = random_spec(&mut r, true);
        let theta = random_params(&spec, &mut r);
        let x: Vec<f64> = (0..spec.input_dim).map(|_| r.random_range(-2.0..2.0)).collect();
        let c = r.random_range(0..spec.target_count());
        let g = nnet::grad_prob(&spec, &theta, &x, c).map_err(|e| e.to_string())?;
        let fd = central_difference(&theta, |t| nnet::predict_prob(&spec, t, &x, c).unwrap());
        worst_prob = worst_prob.max(rel_l2(g.as_slice(), &fd));

        let spec = random_spec(&mut r, false);
        let theta = random_params(&spec, &mut r);
        let n = r.random_range(1..12);
        let inputs = (0..n * spec.input_dim).map(|_| r.random_range(-2.0..2.0)).collect();
        let labels = match spec.head {
            Head::Regression { .. } => Labels::Value((0..n).map(|_| r.random_range(-1.0..1.0)).collect()),
            _ => Labels::Class((0..n).map(|_| r.random_range(0..spec.class_count())).collect()),
        };
        let data = LabeledDataset { inputs, dim: spec.input_dim, labels, problem_name: "fd".into(), seed: 0, class_count: spec.class_count() };
        let lambda = r.random_range(0.0..0.5);
        let (_, g) = nnet::grad_loss(&spec, &theta, &data, lambda).map_err(|e| e.to_string())?;
        let fd = central_difference(&theta, |t| nnet::loss(&spec, t, &data, lambda).unwrap());
        worst_loss = worst_loss.max(rel_l2(g.as_slice(), &fd));
    }
    ensure(
        worst_prob < 1e-5 && worst_loss < 1e-5,
        format!("{cases} cases each; worst rel L2 grad_prob {worst_prob:.2e}, grad_loss {worst_loss:.2e} (< 1e-5)"),
    )
}

// 2 -------------------------------------------------------------------------

fn hmc_calibration_check() -> Check {
    let (cal, _) = hmc_calibration(&BenchConfig::default()).map_err(|e| e.to_string())?;
    ensure(
        cal.passed(),
        format!("mean err {:.4} (< 0.05), cov err {:.4} (< 0.1), accept {:.3} (in [0.7, 0.9])", cal.mean_error, cal.cov_error, cal.accept_rate),
    )
}

// 3-5 -----------------------------------------------------------------------

fn validate(p: Problem) -> std::result::Result<ExperimentReport, String> {
    run_validation_classification(&[p], &BenchConfig::default()).map_err(|e| e.to_string())
}

fn binary_linear() -> Check {
    let r = validate(Problem::Linear)?;
    let rho = num(&r, "linear", "gn", Metric::Spearman)?;
    let pr = num(&r, "linear", "gn", Metric::Pearson)?;
    let ale = num(&r, "linear", "aleatoric_pe", Metric::Spearman)?;
    ensure(
        rho >= 0.95 && pr >= 0.90 && ale >= 0.98,
        format!("GN spearman {rho:.4} (>= 0.95), pearson {pr:.4} (>= 0.90); aleatoric spearman {ale:.4} (>= 0.98)"),
    )
}

fn binary_xor() -> Check {
    let r = validate(Problem::Xor)?;
    let rho = num(&r, "xor", "gn", Metric::Spearman)?;
    let gl = num(&r, "xor", "gn_vs_la", Metric::Spearman)?;
    ensure(
        (0.45..=0.90).contains(&rho) && gl >= 0.90,
        format!("GN spearman {rho:.4} (in [0.45, 0.90]); GN vs LA spearman {gl:.4} (>= 0.90)"),
    )
}

fn multiclass_clusters() -> Check {
    let r = validate(Problem::Clusters)?;
    let rho = num(&r, "clusters", "gn", Metric::Spearman)?;
    let ale = num(&r, "clusters", "aleatoric_pe", Metric::Spearman)?;
    let per: Vec<f64> = (0..BenchConfig::default().data.classes)
        .map(|c| num(&r, "clusters", &format!("gn@c{c}"), Metric::Spearman))
        .collect::<std::result::Result<_, _>>()?;
    let spread = per.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - per.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(
        rho >= 0.90 && ale >= 0.95 && spread <= 0.15,
        format!("pooled GN spearman {rho:.4} (>= 0.90); pooled aleatoric {ale:.4} (>= 0.95); per-class spread {spread:.4} (<= 0.15)"),
    )
}

// 6 -------------------------------------------------------------------------

fn regression_anisotropy() -> Check {
    let r = run_validation_regression(&BenchConfig::default()).map_err(|e| e.to_string())?;
    let la = num(&r, "regression-nonlinear", "la", Metric::Spearman)?;
    let gn = num(&r, "regression-nonlinear", "gn", Metric::Spearman)?;
    let nl = num(&r, "regression-nonlinear", "fisher", Metric::EigRatio)?;
    let lin = num(&r, "regression-linear", "fisher", Metric::EigRatio)?;
    ensure(
        la - gn >= 0.05 && nl / lin >= 100.0,
        format!("LA {la:.4} - GN {gn:.4} = {:.4} (>= 0.05); eig ratio {nl:.3e} / {lin:.3e} = {:.3e} (>= 100)", la - gn, nl / lin),
    )
}

// 7 -------------------------------------------------------------------------

fn proxy_bias() -> Check {
    let mut cfg = BenchConfig::default();
    let out = run_proxy_bias(&[Problem::Linear, Problem::Xor], &cfg).map_err(|e| e.to_string())?;
    cfg.proxy.swap = true;
    let swapped = run_proxy_bias(&[Problem::Xor], &cfg).map_err(|e| e.to_string())?;
    let r = &out.report;
    let d = num(r, "xor", "log_ratio", Metric::CohensD)?;
    let t = num(r, "xor", "log_ratio", Metric::WelchT)?;
    let p = num(r, "xor", "log_ratio", Metric::WelchP)?;
    let (ra, rid, rb) =
        (num(r, "xor", "A", Metric::RatioTopBottom)?, num(r, "xor", "id", Metric::RatioTopBottom)?, num(r, "xor", "B", Metric::RatioTopBottom)?);
    let d_lin = num(r, "linear", "log_ratio", Metric::CohensD)?;
    let ds = num(&swapped.report, "xor", "log_ratio", Metric::CohensD)?;
    let ts = num(&swapped.report, "xor", "log_ratio", Metric::WelchT)?;
    let antisym = ds == -d && ts == -t;
    ensure(
        d <= -1.0 && p < 1e-6 && ra < rid && rid < rb && antisym && d_lin.abs() < d.abs(),
        format!(
            "xor d {d:.3} (<= -1), p {p:.2e} (< 1e-6), r_A {ra:.3} < r_id {rid:.3} < r_B {rb:.3}; swap d {ds:.3}, t {ts:.3} vs t {t:.3} (exact negation: {antisym}); |d_linear| {:.3} < |d_xor| {:.3}",
            d_lin.abs(),
            d.abs()
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn scaling_u_shape() -> Check {
    let cfg = BenchConfig::default();
    let r = run_scaling(&scaling_ladder(&cfg), &cfg).map_err(|e| e.to_string())?;
    let mut rhos = Vec::new();
    for spec in scaling_ladder(&cfg) {
        let m = spec.label();
        if let Some(v) = r.value("rings-binary", Some(&m), "gn", Metric::Spearman) {
            rhos.push((m, nnet::param_count(&spec), v));
        }
    }
    let errors: Vec<String> = r.errors().map(|e| format!("{}: {}", e.model, e.value_text())).collect();
    if rhos.len() < 3 {
        return Err(format!("only {} models produced correlations; errors {errors:?}", rhos.len()));
    }
    let trail: Vec<String> = rhos.iter().map(|(m, d, v)| format!("{m}[{d}]={v:.3}")).collect();
    let (imin, min) = rhos.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, r)| if r.2 < acc.1 { (i, r.2) } else { acc });
    let first = rhos[0].2;
    let last = rhos[rhos.len() - 1].2;
    let interior = imin > 0 && imin < rhos.len() - 1;
    ensure(
        first >= 0.90 && interior && last - min >= 0.05 && errors.is_empty(),
        format!(
            "{}; first {first:.3} (>= 0.90), min at {} (interior: {interior}), last - min {:.3} (>= 0.05); errors {errors:?}",
            trail.join(" "),
            rhos[imin].0,
            last - min
        ),
    )
}

// 9 -------------------------------------------------------------------------

fn gv(v: Vec<f64>) -> GradientVector<f64> {
    GradientVector::new(v).unwrap()
}

fn algebraic_identities() -> Check {
    let mut s = rng::stream(909);
    let mut worst_cross: f64 = 0.0;
    for t in [1usize, 2, 3, 7, 16] {
        let grads: Vec<_> = (0..t).map(|_| gv((0..11).map(|_| rng::normal(&mut s)).collect())).collect();
        let sg = SequenceGradients::new(grads.clone(), vec![0.3; t]).map_err(|e| e.to_string())?;
        let mut expanded = 0.0;
        for a in &grads {
            for b in &grads {
                expanded += a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        expanded /= (t * t) as f64;
        worst_cross = worst_cross.max((uq::sequence_epistemic(&sg) - expanded).abs() / expanded.abs());
    }

    // autoregressive toy decoder: inputs are embeddings of the last two emitted tokens
    let spec = MlpSpec::softmax(2, &[6], 3);
    let theta: Params = nnet::init_params(&spec, 77);
    let mut worst_lin: f64 = 0.0;
    for len in [1usize, 4, 9] {
        let mut xs = Vec::new();
        let mut tokens = vec![0usize, 2];
        for _ in 0..len {
            let n = tokens.len();
            let x = [tokens[n - 1] as f64 - 1.0, 0.5 * tokens[n - 2] as f64 - 0.5];
            let out = nnet::forward(&spec, &theta, &x).unwrap();
            xs.extend_from_slice(&x);
            tokens.push((0..3).max_by(|&a, &b| out[a].total_cmp(&out[b])).unwrap());
        }
        let emitted = &tokens[2..];
        let pooled = nnet::grad_weighted_targets(&spec, &theta, &xs, emitted, &vec![1.0 / len as f64; len]).unwrap();
        let grads: Vec<_> = emitted.iter().enumerate().map(|(t, &c)| nnet::grad_prob(&spec, &theta, &xs[2 * t..2 * t + 2], c).unwrap()).collect();
        let mean = SequenceGradients::new(grads, vec![0.5; len]).unwrap().mean_gradient();
        let scale = mean.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = pooled.as_slice().iter().zip(mean.as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        worst_lin = worst_lin.max(err);
    }

    let grid = Grid::new_2d((-2.0, 2.0), (-2.0, 2.0), 7, 7).unwrap();
    let xor_spec = MlpSpec::binary(2, &[5, 5]);
    let xor_theta: Params = nnet::init_params(&xor_spec, 3);
    let base = uq::uncertainty_map(&xor_spec, &xor_theta, &grid, Estimator::GradientNorm, 1, None).unwrap();
    let mut iso_exact = true;
    for s2 in [1e-3, 0.37, 4.0, 913.5] {
        let cov = CovarianceModel::Isotropic { variance: s2 };
        let scaled = uq::uncertainty_map(&xor_spec, &xor_theta, &grid, Estimator::GradientNorm, 1, Some(&cov)).unwrap();
        iso_exact &= base.values.iter().zip(&scaled.values).all(|(a, b)| *b == s2 * a);
    }

    let mut worst_closure: f64 = 0.0;
    let mut r = rng::stream(910);
    for _ in 0..50 {
        let k = r.random_range(2..=5);
        let spec = MlpSpec::softmax(2, &[r.random_range(1..=6)], k);
        let theta = random_params(&spec, &mut r);
        let x = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let gs: Vec<_> = (0..k).map(|c| nnet::grad_prob(&spec, &theta, &x, c).unwrap()).collect();
        let scale = gs.iter().flat_map(|g| g.as_slice()).fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..gs[0].len() {
            let sum: f64 = gs.iter().map(|g| g.as_slice()[i]).sum();
            worst_closure = worst_closure.max(sum.abs() / scale);
        }
    }
    ensure(
        worst_cross <= 1e-12 && worst_lin <= 1e-10 && iso_exact && worst_closure <= 1e-12,
        format!(
            "cross-term rel {worst_cross:.1e} (<= 1e-12); linearity rel {worst_lin:.1e} (<= 1e-10); isotropic scaling exact: {iso_exact}; softmax closure rel {worst_closure:.1e} (<= 1e-12)"
        ),
    )
}

// 10 ------------------------------------------------------------------------

fn statistics_oracles() -> Check {
    let ps = |a: &[f64], b: &[f64]| stats::PairedSeries::new(a.to_vec(), b.to_vec()).unwrap();
    // means 2 and 7/3: Sxy = 3, Sxx = 2, Syy = 14/3
    let r = stats::pearson(&ps(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0])).map_err(|e| e.to_string())?;
    let r_ok = (r - 0.9820).abs() < 1e-3;
    // ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4): 4.5 / sqrt(4.5 * 5)
    let rho = stats::spearman(&ps(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 30.0, 40.0])).map_err(|e| e.to_string())?;
    let rho_ok = (rho - 4.5 / 22.5f64.sqrt()).abs() < 1e-3;
    let w = stats::welch_t(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
    let w_ok = (w.t + 1.2247).abs() < 1e-3 && (w.dof - 4.0).abs() < 1e-3 && (w.p - 0.2879).abs() < 1e-3;
    let reps = 1000;
    let mut covered = 0;
    for rep in 0..reps {
        let mut s = rng::stream(rng::derive_seed(4242, rep));
        let sample: Vec<f64> = (0..100).map(|_| rng::normal(&mut s)).collect();
        let (lo, hi) = stats::bootstrap_ci(&sample, stats::BootstrapStatistic::Mean, 1000, 0.95, rep).map_err(|e| e.to_string())?;
        covered += usize::from(lo <= 0.0 && 0.0 <= hi);
    }
    let coverage = covered as f64 / reps as f64;
    let cov_ok = (0.93..=0.97).contains(&coverage);
    ensure(
        r_ok && rho_ok && w_ok && cov_ok,
        format!(
            "pearson {r:.4} (0.9820); spearman {rho:.4} (0.9487); welch t {:.4} dof {:.3} p {:.4} (-1.2247, 4, 0.2879); bootstrap coverage {coverage:.3} (in [0.93, 0.97])",
            w.t, w.dof, w.p
        ),
    )
}

// 11 ------------------------------------------------------------------------

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let cfg = BenchConfig::default();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut out = run_proxy_bias(&[Problem::Xor], &cfg).map_err(|e| e.to_string())?;
        out.report.extend(run_validation_classification(&[Problem::Linear, Problem::Clusters], &cfg).map_err(|e| e.to_string())?);
        write_output(dir.path(), &out).map_err(|e| e.to_string())?;
        runs.push(dir_bytes(dir.path()));
    }
    let pgm = runs[0].iter().filter(|(n, _)| n.ends_with(".pgm")).count();
    let bytes: usize = runs[0].iter().map(|(_, b)| b.len()).sum();
    ensure(
        runs[0] == runs[1] && pgm > 0,
        format!("{} files ({pgm} PGM, {bytes} bytes) byte-identical across two runs: {}", runs[0].len(), runs[0] == runs[1]),
    )
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", limit: Some(secs(10)), run: gradient_correctness },
        Criterion { id: 2, name: "HMC calibration", limit: Some(secs(60)), run: hmc_calibration_check },
        Criterion { id: 3, name: "binary linear validation", limit: Some(secs(600)), run: binary_linear },
        Criterion { id: 4, name: "binary XOR validation", limit: Some(secs(900)), run: binary_xor },
        Criterion { id: 5, name: "multiclass clusters", limit: Some(secs(1200)), run: multiclass_clusters },
        Criterion { id: 6, name: "regression anisotropy", limit: Some(secs(600)), run: regression_anisotropy },
        Criterion { id: 7, name: "proxy bias", limit: Some(secs(900)), run: proxy_bias },
        Criterion { id: 8, name: "scaling U-shape", limit: Some(secs(7200)), run: scaling_u_shape },
        Criterion { id: 9, name: "algebraic identities", limit: Some(secs(10)), run: algebraic_identities },
        Criterion { id: 10, name: "statistics oracles", limit: Some(secs(60)), run: statistics_oracles },
        Criterion { id: 11, name: "determinism", limit: None, run: determinism },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let (mut pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let timing = match c.limit {
            Some(limit) => {
                let in_time = elapsed <= limit;
                pass &= in_time;
                format!("{:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs())
            }
            None => format!("{:.1}s", elapsed.as_secs_f64()),
        };
        if !pass {
            failed += 1;
        }
        println!("{} criterion {} ({}): {detail} [{timing}]", if pass { "PASS" } else { "FAIL" }, c.id, c.name);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
