//! Experiment pipelines comparing gradient-based uncertainty estimators
//! against HMC references, with CSV reports and PGM map output.

pub mod config;
pub mod emit;
pub mod error;
pub mod fit;
pub mod pipelines;
pub mod problems;
pub mod report;

use std::path::Path;

pub use config::BenchConfig;
pub use error::{BenchError, Result};
pub use fit::hessian_spectrum;
pub use pipelines::{
    hmc_calibration, run_maps, run_proxy_bias, run_scaling, run_validation_classification, run_validation_regression,
    scaling_ladder, Calibration, NamedMap, PipelineOutput,
};
pub use problems::{EvalGrid, Problem};
pub use report::{emit_csv, ExperimentReport, Metric};

/// Report file name inside an output directory.
pub const REPORT_FILE: &str = "report.csv";

/// Writes `report.csv` and, per map, `<stem>.csv` (raw values) and `<stem>.pgm`
/// (normalized) into `dir`, creating it if needed.
pub fn write_output(dir: &Path, out: &PipelineOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(error::io_err(dir))?;
    emit_csv(&out.report, &dir.join(REPORT_FILE))?;
    for m in &out.maps {
        let stem = m.stem();
        emit::emit_map_csv(&m.map, &dir.join(format!("{stem}.csv")))?;
        if !m.map.grid_ys.is_empty() {
            let img = if m.map.normalized { m.map.clone() } else { gradvar::uq::normalize_map(&m.map) };
            emit::emit_map_image(&img, &dir.join(format!("{stem}.pgm")))?;
        }
    }
    Ok(())
}
