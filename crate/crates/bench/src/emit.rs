//! Map images and CSV exports.
//!
//! * Maps as PGM: `P5\n{width} {height}\n255\n` then one byte per cell,
//!   `round(255 v)`, rows from the largest `x2` down to the smallest.
//! * Maps as CSV: `x1,x2,value` (`x1,value` for 1D maps), grid order.
//! * Datasets as CSV: `x1[,x2],label`.

use std::fmt::Write as _;
use std::path::Path;

use gradvar::synthgen::Labels;
use gradvar::uq::UncertaintyMap;
use gradvar::Dataset;

use crate::error::{io_err, BenchError, Result};

/// PGM bytes of a normalized 2D map.
pub fn map_image_bytes(map: &UncertaintyMap) -> Result<Vec<u8>> {
    if !map.normalized {
        return Err(BenchError::Invalid(format!("map `{}` is not normalized", map.estimator_name)));
    }
    if map.grid_ys.is_empty() {
        return Err(BenchError::Invalid(format!("map `{}` is 1D; export it as CSV", map.estimator_name)));
    }
    let (w, h) = (map.width(), map.height());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h);
    for row in (0..h).rev() {
        for col in 0..w {
            let v = map.get(col, row);
            if !(0.0..=1.0).contains(&v) {
                return Err(BenchError::Invalid(format!("map value {v} outside [0, 1]")));
            }
            out.push((255.0 * v).round() as u8);
        }
    }
    Ok(out)
}

pub fn emit_map_image(map: &UncertaintyMap, path: &Path) -> Result<()> {
    let bytes = map_image_bytes(map)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn map_csv_string(map: &UncertaintyMap) -> String {
    let mut s = String::new();
    if map.grid_ys.is_empty() {
        s.push_str("x1,value\n");
        for (x, v) in map.grid_xs.iter().zip(&map.values) {
            let _ = writeln!(s, "{x:.16e},{v:.16e}");
        }
    } else {
        s.push_str("x1,x2,value\n");
        for (row, y) in map.grid_ys.iter().enumerate() {
            for (col, x) in map.grid_xs.iter().enumerate() {
                let _ = writeln!(s, "{x:.16e},{y:.16e},{:.16e}", map.get(col, row));
            }
        }
    }
    s
}

pub fn emit_map_csv(map: &UncertaintyMap, path: &Path) -> Result<()> {
    std::fs::write(path, map_csv_string(map)).map_err(io_err(path))
}

pub fn dataset_csv_string(data: &Dataset) -> String {
    let mut s = String::new();
    let cols: Vec<String> = (1..=data.dim).map(|i| format!("x{i}")).collect();
    let _ = writeln!(s, "{},label", cols.join(","));
    for i in 0..data.len() {
        for v in data.point(i) {
            let _ = write!(s, "{v:.16e},");
        }
        match &data.labels {
            Labels::Class(c) => {
                let _ = writeln!(s, "{}", c[i]);
            }
            Labels::Value(y) => {
                let _ = writeln!(s, "{:.16e}", y[i]);
            }
        }
    }
    s
}

pub fn emit_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_csv_string(data)).map_err(io_err(path))
}
