//! Experiment configuration with flat `key=value` overrides.

use gradvar::refpost::HmcConfig;
use gradvar::trainmap::TrainConfig;

use crate::error::{BenchError, Result};

/// Hidden-layer widths of the scaling ladder; `0` stands for logistic regression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidthList(pub Vec<usize>);

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! scalar_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.trim().parse::<$t>().map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

scalar_value!(usize, u64, bool);

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.trim().parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err("must be finite".into())
        }
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl ConfigValue for WidthList {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let ws = s.split(',').map(|w| w.trim().parse::<usize>().map_err(|e| e.to_string())).collect::<std::result::Result<Vec<_>, _>>()?;
        if ws.is_empty() {
            return Err("empty width list".into());
        }
        Ok(WidthList(ws))
    }
    fn render(&self) -> String {
        self.0.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub lambda: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcSettings {
    pub warmup: usize,
    pub draws: usize,
    pub chains: usize,
    pub leapfrog: usize,
    pub target_accept: f64,
    pub jitter: f64,
    pub init_sd: f64,
    pub thin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub per_class: usize,
    pub regression_n: usize,
    pub classes: usize,
    pub linear_margin: f64,
    pub xor_noise: f64,
    pub ring_noise: f64,
    pub cluster_spread: f64,
    pub spiral_noise: f64,
    pub regression_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    /// Grid points per axis of the correlation evaluation set.
    pub grid: usize,
    pub heldout: usize,
    /// Relative expansion of the data bounding box.
    pub expand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxySettings {
    pub grid: usize,
    pub width: usize,
    pub axis: usize,
    pub threshold: f64,
    pub swap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub train: TrainSettings,
    pub hmc: HmcSettings,
    pub data: DataSettings,
    pub eval: EvalSettings,
    pub laplace_draws: usize,
    pub proxy: ProxySettings,
    pub scaling_widths: WidthList,
    pub map_grid: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        use gradvar::synthgen as sg;
        BenchConfig {
            seed: 0,
            train: TrainSettings { lambda: 1e-2, max_iters: 5000, grad_tol: 1e-5, step_size: 1e-2 },
            hmc: HmcSettings { warmup: 1000, draws: 1000, chains: 4, leapfrog: 32, target_accept: 0.8, jitter: 0.2, init_sd: 0.1, thin: 1 },
            data: DataSettings {
                per_class: sg::DEFAULT_PER_CLASS,
                regression_n: sg::DEFAULT_REGRESSION_N,
                classes: sg::DEFAULT_CLASSES,
                linear_margin: sg::DEFAULT_LINEAR_MARGIN,
                xor_noise: sg::DEFAULT_XOR_NOISE,
                ring_noise: sg::DEFAULT_SCATTER,
                cluster_spread: sg::DEFAULT_SCATTER,
                spiral_noise: sg::DEFAULT_SPIRAL_NOISE,
                regression_noise: sg::DEFAULT_REGRESSION_NOISE,
            },
            eval: EvalSettings { grid: 16, heldout: 144, expand: 0.2 },
            laplace_draws: gradvar::uq::DEFAULT_LAPLACE_DRAWS,
            proxy: ProxySettings { grid: 100, width: 32, axis: 1, threshold: 0.0, swap: false },
            scaling_widths: WidthList(vec![0, 8, 16, 32, 64, 128, 256]),
            map_grid: 100,
        }
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+ : $ty:ty),* $(,)?) => {
        impl BenchConfig {
            /// Every accepted override key.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Applies one override; unknown keys and unparsable values are errors.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$($field).+ = <$ty as ConfigValue>::parse_value(value).map_err(|reason| BenchError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            reason,
                        })?;
                    })*
                    _ => return Err(BenchError::UnknownKey(key.to_string())),
                }
                self.validate()
            }

            /// The effective configuration as `(key, value)` pairs, in key order.
            pub fn entries(&self) -> Vec<(String, String)> {
                vec![$(($key.to_string(), <$ty as ConfigValue>::render(&self.$($field).+))),*]
            }
        }
    };
}

config_keys! {
    "seed" => seed: u64,
    "train.lambda" => train.lambda: f64,
    "train.max_iters" => train.max_iters: usize,
    "train.grad_tol" => train.grad_tol: f64,
    "train.step_size" => train.step_size: f64,
    "hmc.warmup" => hmc.warmup: usize,
    "hmc.draws" => hmc.draws: usize,
    "hmc.chains" => hmc.chains: usize,
    "hmc.leapfrog" => hmc.leapfrog: usize,
    "hmc.target_accept" => hmc.target_accept: f64,
    "hmc.jitter" => hmc.jitter: f64,
    "hmc.init_sd" => hmc.init_sd: f64,
    "hmc.thin" => hmc.thin: usize,
    "data.per_class" => data.per_class: usize,
    "data.regression_n" => data.regression_n: usize,
    "data.classes" => data.classes: usize,
    "data.linear_margin" => data.linear_margin: f64,
    "data.xor_noise" => data.xor_noise: f64,
    "data.ring_noise" => data.ring_noise: f64,
    "data.cluster_spread" => data.cluster_spread: f64,
    "data.spiral_noise" => data.spiral_noise: f64,
    "data.regression_noise" => data.regression_noise: f64,
    "eval.grid" => eval.grid: usize,
    "eval.heldout" => eval.heldout: usize,
    "eval.expand" => eval.expand: f64,
    "laplace.draws" => laplace_draws: usize,
    "proxy.grid" => proxy.grid: usize,
    "proxy.width" => proxy.width: usize,
    "proxy.axis" => proxy.axis: usize,
    "proxy.threshold" => proxy.threshold: f64,
    "proxy.swap" => proxy.swap: bool,
    "scaling.widths" => scaling_widths: WidthList,
    "map.grid" => map_grid: usize,
}

impl BenchConfig {
    /// Parses `key=value` and applies it.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| BenchError::Invalid(format!("override `{kv}` is not of the form key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Invalid(m.to_string()));
        if self.eval.grid < 2 || self.proxy.grid < 2 || self.map_grid < 2 {
            return bad("grid resolutions must be at least 2");
        }
        if self.data.classes < 2 {
            return bad("data.classes must be at least 2");
        }
        if self.proxy.axis > 1 {
            return bad("proxy.axis must be 0 or 1");
        }
        if !(self.eval.expand >= 0.0) {
            return bad("eval.expand must be non-negative");
        }
        if self.laplace_draws == 0 {
            return bad("laplace.draws must be at least 1");
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            prior_precision: self.train.lambda,
            max_iters: self.train.max_iters,
            grad_tol: self.train.grad_tol,
            step_size: self.train.step_size,
            seed,
            ..Default::default()
        }
    }

    pub fn hmc_config(&self, seed: u64) -> HmcConfig {
        HmcConfig {
            warmup_iters: self.hmc.warmup,
            sample_iters: self.hmc.draws,
            chains: self.hmc.chains,
            leapfrog_steps: self.hmc.leapfrog,
            target_accept: self.hmc.target_accept,
            seed,
            step_jitter: self.hmc.jitter,
            init_jitter_sd: self.hmc.init_sd,
            thin: self.hmc.thin,
        }
    }
}

/// Deterministic sub-seed for a labelled purpose (FNV-1a of the label).
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    let h = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3));
    gradvar::rng::derive_seed(seed, h)
}
