//! Benchmark problems, their default models and evaluation sets.

use std::fmt;
use std::str::FromStr;

use gradvar::synthgen::{self, RegressionKind};
use gradvar::uq::Grid;
use gradvar::{Dataset, MlpSpec};

use crate::config::{sub_seed, BenchConfig};
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Problem {
    Linear,
    Xor,
    RingsBinary,
    Clusters,
    Spirals,
    RingsMulti,
    RegressionLinear,
    RegressionNonlinear,
}

impl Problem {
    pub const CLASSIFICATION: [Problem; 6] =
        [Problem::Linear, Problem::Xor, Problem::RingsBinary, Problem::Clusters, Problem::Spirals, Problem::RingsMulti];
    pub const REGRESSION: [Problem; 2] = [Problem::RegressionLinear, Problem::RegressionNonlinear];
    pub const PROXY: [Problem; 3] = [Problem::Linear, Problem::Xor, Problem::RingsBinary];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Linear => "linear",
            Problem::Xor => "xor",
            Problem::RingsBinary => "rings-binary",
            Problem::Clusters => "clusters",
            Problem::Spirals => "spirals",
            Problem::RingsMulti => "rings-multi",
            Problem::RegressionLinear => "regression-linear",
            Problem::RegressionNonlinear => "regression-nonlinear",
        }
    }

    pub fn is_regression(self) -> bool {
        matches!(self, Problem::RegressionLinear | Problem::RegressionNonlinear)
    }

    pub fn class_count(self, cfg: &BenchConfig) -> usize {
        match self {
            Problem::Linear | Problem::Xor | Problem::RingsBinary => 2,
            Problem::Clusters | Problem::Spirals | Problem::RingsMulti => cfg.data.classes,
            _ => 0,
        }
    }

    /// Sample size of the training set.
    pub fn train_size(self, cfg: &BenchConfig) -> usize {
        if self.is_regression() {
            cfg.data.regression_n
        } else {
            cfg.data.per_class * self.class_count(cfg)
        }
    }

    /// Draws `n` points from the problem's distribution.
    pub fn generate(self, cfg: &BenchConfig, n: usize, seed: u64) -> Result<Dataset> {
        let d = &cfg.data;
        let k = self.class_count(cfg);
        Ok(match self {
            Problem::Linear => synthgen::make_linear2d(n, d.linear_margin, seed)?,
            Problem::Xor => synthgen::make_xor2d(n, d.xor_noise, seed)?,
            Problem::RingsBinary | Problem::RingsMulti => synthgen::make_rings2d(n, k, d.ring_noise, seed)?,
            Problem::Clusters => synthgen::make_clusters2d(n, k, d.cluster_spread, seed)?,
            Problem::Spirals => synthgen::make_spirals2d(n, k, d.spiral_noise, seed)?,
            Problem::RegressionLinear => synthgen::make_regression1d(RegressionKind::Linear, n, d.regression_noise, seed)?,
            Problem::RegressionNonlinear => {
                synthgen::make_regression1d(RegressionKind::Nonlinear, n, d.regression_noise, seed)?
            }
        })
    }

    /// The training set for `cfg.seed`.
    pub fn training_data(self, cfg: &BenchConfig) -> Result<Dataset> {
        self.generate(cfg, self.train_size(cfg), sub_seed(cfg.seed, &format!("data/{}", self.name())))
    }

    /// Model used by the validation pipelines.
    pub fn validation_model(self, cfg: &BenchConfig) -> MlpSpec {
        let k = self.class_count(cfg);
        let noise = cfg.data.regression_noise;
        match self {
            Problem::Linear => MlpSpec::binary(2, &[]),
            Problem::Xor | Problem::RingsBinary => MlpSpec::binary(2, &[8, 8]),
            Problem::Clusters => MlpSpec::softmax(2, &[], k),
            Problem::Spirals => MlpSpec::softmax(2, &[16, 16], k),
            Problem::RingsMulti => MlpSpec::softmax(2, &[8, 8], k),
            Problem::RegressionLinear => MlpSpec::regression(1, &[], noise),
            Problem::RegressionNonlinear => MlpSpec::regression(1, &[32], noise),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s.trim() {
            "linear" => Problem::Linear,
            "xor" => Problem::Xor,
            "rings" | "rings-binary" => Problem::RingsBinary,
            "clusters" => Problem::Clusters,
            "spirals" => Problem::Spirals,
            "rings-multi" => Problem::RingsMulti,
            "regression-linear" => Problem::RegressionLinear,
            "regression-nonlinear" => Problem::RegressionNonlinear,
            other => return Err(BenchError::UnknownProblem(other.to_string())),
        };
        Ok(p)
    }
}

/// Parses a comma-separated problem list, keeping order and dropping repeats.
pub fn parse_problem_list(s: &str) -> Result<Vec<Problem>> {
    let mut out = Vec::new();
    for tok in s.split(',').filter(|t| !t.trim().is_empty()) {
        let p: Problem = tok.parse()?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(BenchError::Invalid("empty problem list".into()));
    }
    Ok(out)
}

/// Regular grid over one or two axes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub x1: (f64, f64),
    pub x2: Option<(f64, f64)>,
    pub resolution: usize,
}

impl EvalGrid {
    /// Bounding box of `data` widened by `expand` times its extent on each axis side pair.
    pub fn around(data: &Dataset, expand: f64, resolution: usize) -> Result<Self> {
        let b = data.bounds();
        let widen = |(lo, hi): (f64, f64)| {
            let pad = 0.5 * expand * (hi - lo);
            (lo - pad, hi + pad)
        };
        let g = EvalGrid { x1: widen(b[0]), x2: b.get(1).copied().map(widen), resolution };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && hi > lo;
        if self.resolution < 2 || !ok(self.x1) || !self.x2.is_none_or(ok) {
            return Err(BenchError::Invalid(format!("degenerate evaluation grid {self:?}")));
        }
        Ok(())
    }

    pub fn to_grid(&self) -> Result<Grid> {
        self.validate()?;
        Ok(match self.x2 {
            Some(y) => Grid::new_2d(self.x1, y, self.resolution, self.resolution)?,
            None => Grid::new_1d(self.x1, self.resolution)?,
        })
    }
}

/// Shared evaluation inputs: grid points followed by held-out draws.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub xs: Vec<f64>,
    pub dim: usize,
    pub grid_points: usize,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.xs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// `eval.grid` points per axis over the expanded box (the full grid in 1D)
    /// plus `eval.heldout` fresh draws from the problem distribution.
    pub fn build(problem: Problem, train: &Dataset, cfg: &BenchConfig) -> Result<Self> {
        let res = if train.dim == 1 { cfg.eval.grid * cfg.eval.grid } else { cfg.eval.grid };
        let grid = EvalGrid::around(train, cfg.eval.expand, res)?.to_grid()?;
        let mut xs = grid.points::<f64>();
        let grid_points = grid.len();
        if cfg.eval.heldout > 0 {
            let held = problem.generate(cfg, cfg.eval.heldout, sub_seed(cfg.seed, &format!("heldout/{}", problem.name())))?;
            xs.extend_from_slice(&held.inputs);
        }
        Ok(EvalSet { xs, dim: train.dim, grid_points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gradvar::nnet::param_count;

    #[test]
    fn names_round_trip() {
        for p in Problem::CLASSIFICATION.iter().chain(&Problem::REGRESSION) {
            assert_eq!(p.name().parse::<Problem>().unwrap(), *p);
        }
        assert_eq!("rings".parse::<Problem>().unwrap(), Problem::RingsBinary);
        assert!("moons".parse::<Problem>().is_err());
        assert_eq!(parse_problem_list("xor,linear,xor").unwrap(), vec![Problem::Xor, Problem::Linear]);
        assert!(parse_problem_list(" , ").is_err());
    }

    #[test]
    fn default_models_have_expected_sizes() {
        let cfg = BenchConfig::default();
        assert_eq!(param_count(&Problem::Linear.validation_model(&cfg)), 3);
        assert_eq!(param_count(&Problem::RegressionLinear.validation_model(&cfg)), 2);
        assert_eq!(param_count(&Problem::RegressionNonlinear.validation_model(&cfg)), 97);
    }

    #[test]
    fn eval_set_has_grid_and_heldout_points() {
        let cfg = BenchConfig::default();
        let data = Problem::Xor.training_data(&cfg).unwrap();
        assert_eq!(data.len(), 400);
        let es = EvalSet::build(Problem::Xor, &data, &cfg).unwrap();
        assert_eq!(es.len(), 400);
        assert_eq!(es.grid_points, 256);
        let b = data.bounds();
        let (lo, hi) = (es.xs[0], es.xs[2 * 15]);
        let w = b[0].1 - b[0].0;
        assert!((lo - (b[0].0 - 0.1 * w)).abs() < 1e-12 && (hi - (b[0].1 + 0.1 * w)).abs() < 1e-12);
        let reg = Problem::RegressionNonlinear.training_data(&cfg).unwrap();
        assert_eq!(EvalSet::build(Problem::RegressionNonlinear, &reg, &cfg).unwrap().len(), 400);
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(EvalGrid { x1: (0.0, 0.0), x2: None, resolution: 4 }.validate().is_err());
        assert!(EvalGrid { x1: (0.0, 1.0), x2: Some((1.0, f64::NAN)), resolution: 4 }.validate().is_err());
        assert!(EvalGrid { x1: (0.0, 1.0), x2: None, resolution: 1 }.validate().is_err());
    }
}
