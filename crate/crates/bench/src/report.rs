//! Experiment reports and their CSV form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{io_err, BenchError, Result};

pub const CSV_HEADER: [&str; 6] = ["problem", "model", "estimator", "metric_name", "value", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Pearson,
    Spearman,
    RatioTopBottom,
    WelchT,
    WelchP,
    CohensD,
    EigMin,
    EigMax,
    EigRatio,
    ParamCount,
    Accuracy,
    /// Root mean squared error of a regression fit.
    Rmse,
    /// Mean Metropolis acceptance probability of the reference sampler.
    AcceptRate,
    /// Number of posterior draws behind a reference.
    HmcDraws,
    /// Effective configuration entry.
    Config,
    /// A failed problem or model.
    Error,
}

impl Metric {
    pub const ALL: [Metric; 16] = [
        Metric::Pearson,
        Metric::Spearman,
        Metric::RatioTopBottom,
        Metric::WelchT,
        Metric::WelchP,
        Metric::CohensD,
        Metric::EigMin,
        Metric::EigMax,
        Metric::EigRatio,
        Metric::ParamCount,
        Metric::Accuracy,
        Metric::Rmse,
        Metric::AcceptRate,
        Metric::HmcDraws,
        Metric::Config,
        Metric::Error,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Pearson => "pearson",
            Metric::Spearman => "spearman",
            Metric::RatioTopBottom => "ratio_top_bottom",
            Metric::WelchT => "welch_t",
            Metric::WelchP => "welch_p",
            Metric::CohensD => "cohens_d",
            Metric::EigMin => "eig_min",
            Metric::EigMax => "eig_max",
            Metric::EigRatio => "eig_ratio",
            Metric::ParamCount => "param_count",
            Metric::Accuracy => "accuracy",
            Metric::Rmse => "rmse",
            Metric::AcceptRate => "accept_rate",
            Metric::HmcDraws => "hmc_draws",
            Metric::Config => "config",
            Metric::Error => "error",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| BenchError::Invalid(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Number(v) => format!("{v:.16e}"),
            Value::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub problem: String,
    pub model: String,
    pub estimator: String,
    pub metric: Metric,
    pub value: Value,
}

impl Row {
    pub fn value_text(&self) -> String {
        self.value.render()
    }

    pub fn number(&self) -> Option<f64> {
        match self.value {
            Value::Number(v) => Some(v),
            Value::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<Row>,
    pub config_echo: Vec<(String, String)>,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn new(config_echo: Vec<(String, String)>, seed: u64) -> Self {
        ExperimentReport { rows: Vec::new(), config_echo, seed }
    }

    pub fn push(&mut self, problem: &str, model: &str, estimator: &str, metric: Metric, value: f64) {
        self.rows.push(Row {
            problem: problem.into(),
            model: model.into(),
            estimator: estimator.into(),
            metric,
            value: Value::Number(value),
        });
    }

    pub fn push_error(&mut self, problem: &str, model: &str, message: impl fmt::Display) {
        let msg = message.to_string().replace(['\n', '\r'], " ");
        self.rows.push(Row {
            problem: problem.into(),
            model: model.into(),
            estimator: String::new(),
            metric: Metric::Error,
            value: Value::Text(msg),
        });
    }

    /// Appends the rows of `other`; configuration and seed stay as they are.
    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
    }

    pub fn has_errors(&self) -> bool {
        self.rows.iter().any(|r| r.metric == Metric::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.metric == Metric::Error)
    }

    /// First numeric value matching the key; `model = None` matches any model.
    pub fn value(&self, problem: &str, model: Option<&str>, estimator: &str, metric: Metric) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.problem == problem && model.is_none_or(|m| r.model == m) && r.estimator == estimator && r.metric == metric)
            .and_then(Row::number)
    }

    /// Every CSV record (config echo included), sorted lexicographically.
    pub fn records(&self) -> Vec<[String; 6]> {
        let seed = self.seed.to_string();
        let mut recs: Vec<[String; 6]> = self
            .config_echo
            .iter()
            .map(|(k, v)| ["".into(), "".into(), k.clone(), Metric::Config.name().into(), v.clone(), seed.clone()])
            .chain(self.rows.iter().map(|r| {
                [r.problem.clone(), r.model.clone(), r.estimator.clone(), r.metric.name().into(), r.value.render(), seed.clone()]
            }))
            .collect();
        recs.sort();
        recs
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in self.records() {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| BenchError::Invalid(e.to_string()))
    }

    /// Inverse of [`ExperimentReport::to_csv_string`] up to row order.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(BenchError::Invalid(format!("unexpected header {header:?}")));
        }
        let mut report = ExperimentReport::default();
        let mut seed = None;
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default().to_string();
            let s: u64 = field(5).parse().map_err(|_| BenchError::Invalid(format!("bad seed `{}`", field(5))))?;
            if *seed.get_or_insert(s) != s {
                return Err(BenchError::Invalid("mixed seeds in one report".into()));
            }
            let metric: Metric = field(3).parse()?;
            let value = match metric {
                Metric::Config => {
                    report.config_echo.push((field(2), field(4)));
                    continue;
                }
                Metric::Error => Value::Text(field(4)),
                _ => Value::Number(field(4).parse().map_err(|_| BenchError::Invalid(format!("bad value `{}`", field(4))))?),
            };
            report.rows.push(Row { problem: field(0), model: field(1), estimator: field(2), metric, value });
        }
        report.seed = seed.unwrap_or(0);
        Ok(report)
    }
}

/// Writes the report as CSV.
pub fn emit_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    std::fs::write(path, report.to_csv_string()?).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut r = ExperimentReport::new(vec![("hmc.chains".into(), "4".into())], 7);
        r.push("xor", "mlp(8,8)", "gn", Metric::Spearman, 0.123_456_789_012_345_67);
        r.push("linear", "logreg", "gn", Metric::Pearson, -1e-300);
        r.push_error("rings-binary", "mlp(8,8)", "bad, thing\nhappened");
        r
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = ExperimentReport::default();
        assert_eq!(r.to_csv_string().unwrap(), "problem,model,estimator,metric_name,value,seed\n");
    }

    #[test]
    fn rows_are_sorted_and_round_trip() {
        let r = sample();
        let text = r.to_csv_string().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with(",,hmc.chains,config,4,7"));
        assert!(lines[2].starts_with("linear,logreg,gn,pearson,-1.0000000000000000e-300,7"));
        assert!(!text.contains('\r'));
        let back = ExperimentReport::parse_csv(&text).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.config_echo, r.config_echo);
        assert_eq!(back.rows.len(), 3);
        for row in &r.rows {
            assert!(back.rows.contains(row), "{row:?}");
        }
        assert_eq!(back.to_csv_string().unwrap(), text);
    }

    #[test]
    fn lookup_and_errors() {
        let r = sample();
        assert!(r.has_errors());
        assert_eq!(r.value("xor", None, "gn", Metric::Spearman), Some(0.123_456_789_012_345_67));
        assert_eq!(r.value("xor", Some("logreg"), "gn", Metric::Spearman), None);
        assert_eq!(r.errors().count(), 1);
    }

    #[test]
    fn metric_names_parse() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("rho".parse::<Metric>().is_err());
    }
}
