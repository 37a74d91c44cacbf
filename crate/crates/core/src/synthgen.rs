//! Deterministic generators for the synthetic benchmark problems.
//!
//! All generators draw from a single ChaCha stream seeded by `seed`, so a
//! `(generator, n, seed, noise)` tuple always regenerates the same bytes.
//! Class labels are assigned round-robin (`i % k`), which keeps classes
//! balanced to within one sample.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Default sample count per class for the 2D problems.
pub const DEFAULT_PER_CLASS: usize = 200;
/// Default sample count for the 1D regression problems.
pub const DEFAULT_REGRESSION_N: usize = 100;
/// Default scatter for clusters and rings.
pub const DEFAULT_SCATTER: f64 = 0.15;
/// Default class count for the multiclass problems.
pub const DEFAULT_CLASSES: usize = 4;
pub const DEFAULT_LINEAR_MARGIN: f64 = 0.5;
pub const DEFAULT_XOR_NOISE: f64 = 0.4;
pub const DEFAULT_SPIRAL_NOISE: f64 = 0.1;
pub const DEFAULT_REGRESSION_NOISE: f64 = 0.1;

/// Outer radius of the ring and spiral layouts.
pub const OUTER_RADIUS: f64 = 2.5;
/// Radius of the circle holding cluster centres.
pub const CLUSTER_RADIUS: f64 = 2.0;
/// Half-width of the tangential extent of the linear problem.
pub const LINEAR_EXTENT: f64 = 2.5;
/// XOR cluster centres sit at `(+-XOR_CENTER, +-XOR_CENTER)`.
pub const XOR_CENTER: f64 = 1.0;
/// Support of the 1D regression inputs.
pub const REGRESSION_DOMAIN: (f64, f64) = (-3.0, 3.0);
/// Interval left empty by the nonlinear regression problem.
pub const REGRESSION_GAP: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub enum Labels<T = f64> {
    Class(Vec<usize>),
    Value(Vec<T>),
}

impl<T> Labels<T> {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Value(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Inputs stored row-major as `n x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T = f64> {
    pub inputs: Vec<T>,
    pub dim: usize,
    pub labels: Labels<T>,
    pub problem_name: String,
    pub seed: u64,
    /// Zero for regression.
    pub class_count: usize,
}

impl<T: Real> LabeledDataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Class(v) => Some(v),
            Labels::Value(_) => None,
        }
    }

    /// Rows at `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            inputs.extend_from_slice(self.point(i));
        }
        let labels = match &self.labels {
            Labels::Class(v) => Labels::Class(idx.iter().map(|&i| v[i]).collect()),
            Labels::Value(v) => Labels::Value(idx.iter().map(|&i| v[i]).collect()),
        };
        LabeledDataset {
            inputs,
            dim: self.dim,
            labels,
            problem_name: self.problem_name.clone(),
            seed: self.seed,
            class_count: self.class_count,
        }
    }

    /// Per-axis `(min, max)` of the inputs.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|a| {
                self.inputs.iter().skip(a).step_by(self.dim).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    let v = v.to_f64_lossy();
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }
}

fn classification<T: Real>(name: &str, pts: Vec<[f64; 2]>, labels: Vec<usize>, k: usize, seed: u64) -> LabeledDataset<T> {
    LabeledDataset {
        inputs: pts.iter().flat_map(|p| p.iter().map(|&v| T::lit(v))).collect(),
        dim: 2,
        labels: Labels::Class(labels),
        problem_name: name.to_string(),
        seed,
        class_count: k,
    }
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng::normal::<f64, _>(rng)
}

/// Two classes on either side of the line `x1 = 0`, at least `margin` apart.
///
/// Label 1 lies on the positive-`x1` side. The perpendicular offset is
/// `margin/2 + |N(0,1)|`, the tangential coordinate uniform on
/// `[-LINEAR_EXTENT, LINEAR_EXTENT]`.
pub fn make_linear2d<T: Real>(n: usize, margin: f64, seed: u64) -> Result<LabeledDataset<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("linear2d needs n >= 2".into()));
    }
    let mut rng = rng::stream(seed);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let sign = if y == 1 { 1.0 } else { -1.0 };
        let offset = sign * (0.5 * margin + gauss(&mut rng).abs());
        let along = rng.random_range(-LINEAR_EXTENT..LINEAR_EXTENT);
        pts.push([offset, along]);
        labels.push(y);
    }
    Ok(classification("linear", pts, labels, 2, seed))
}

/// Noise-free XOR label: 0 when both coordinates share a sign.
pub fn xor_label(p: [f64; 2]) -> usize {
    usize::from((p[0] >= 0.0) != (p[1] >= 0.0))
}

/// Four Gaussian clusters at `(+-1, +-1) * XOR_CENTER`, labelled by quadrant parity.
pub fn make_xor2d<T: Real>(n: usize, noise: f64, seed: u64) -> Result<LabeledDataset<T>> {
    if n < 4 {
        return Err(Error::InvalidArgument("xor2d needs n >= 4".into()));
    }
    const CENTERS: [[f64; 2]; 4] = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    let mut rng = rng::stream(seed);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = CENTERS[i % 4];
        let center = [c[0] * XOR_CENTER, c[1] * XOR_CENTER];
        labels.push(xor_label(center));
        pts.push([center[0] + noise * gauss(&mut rng), center[1] + noise * gauss(&mut rng)]);
    }
    Ok(classification("xor", pts, labels, 2, seed))
}

/// Centre radius of ring band `i` out of `k`.
pub fn ring_radius(i: usize, k: usize) -> f64 {
    OUTER_RADIUS * (i + 1) as f64 / k as f64
}

/// Band index of a radius: the nearest band centre.
pub fn ring_label(r: f64, k: usize) -> usize {
    let step = OUTER_RADIUS / k as f64;
    let idx = (r / step - 1.0).round();
    idx.clamp(0.0, (k - 1) as f64) as usize
}

/// `k` concentric rings with radial Gaussian scatter `noise`.
pub fn make_rings2d<T: Real>(n: usize, k: usize, noise: f64, seed: u64) -> Result<LabeledDataset<T>> {
    if k < 2 || n < 2 * k {
        return Err(Error::InvalidArgument("rings2d needs k >= 2 and n >= 2k".into()));
    }
    let mut rng = rng::stream(seed);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % k;
        let angle = rng.random_range(0.0..2.0 * PI);
        let r = ring_radius(y, k) + noise * gauss(&mut rng);
        pts.push([r * angle.cos(), r * angle.sin()]);
        labels.push(y);
    }
    let name = if k == 2 { "rings-binary" } else { "rings-multi" };
    Ok(classification(name, pts, labels, k, seed))
}

/// Centre of cluster `j` out of `k`: evenly spaced on a circle, offset by `pi/4`.
pub fn cluster_center(j: usize, k: usize) -> [f64; 2] {
    let a = 2.0 * PI * j as f64 / k as f64 + PI / 4.0;
    [CLUSTER_RADIUS * a.cos(), CLUSTER_RADIUS * a.sin()]
}

/// `k` isotropic Gaussian blobs with standard deviation `spread`.
pub fn make_clusters2d<T: Real>(n: usize, k: usize, spread: f64, seed: u64) -> Result<LabeledDataset<T>> {
    if k < 2 || n < k {
        return Err(Error::InvalidArgument("clusters2d needs k >= 2 and n >= k".into()));
    }
    let mut rng = rng::stream(seed);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % k;
        let c = cluster_center(y, k);
        pts.push([c[0] + spread * gauss(&mut rng), c[1] + spread * gauss(&mut rng)]);
        labels.push(y);
    }
    Ok(classification("clusters", pts, labels, k, seed))
}

/// Noise-free point on spiral arm `arm` at curve parameter `t` in `[0, 1]`.
///
/// Arms are Archimedean (`r` linear in the angle) and offset by `2 pi / k`.
pub fn spiral_point(arm: usize, k: usize, t: f64) -> [f64; 2] {
    let r = 0.2 + (OUTER_RADIUS - 0.2) * t;
    let a = 2.0 * PI * arm as f64 / k as f64 + 1.5 * PI * t;
    [r * a.cos(), r * a.sin()]
}

/// `k` interleaved spiral arms with isotropic Gaussian noise.
pub fn make_spirals2d<T: Real>(n: usize, k: usize, noise: f64, seed: u64) -> Result<LabeledDataset<T>> {
    if k < 2 || n < k {
        return Err(Error::InvalidArgument("spirals2d needs k >= 2 and n >= k".into()));
    }
    let mut rng = rng::stream(seed);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % k;
        let t: f64 = rng.random_range(0.0..1.0);
        let p = spiral_point(y, k, t);
        pts.push([p[0] + noise * gauss(&mut rng), p[1] + noise * gauss(&mut rng)]);
        labels.push(y);
    }
    Ok(classification("spirals", pts, labels, k, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionKind {
    Linear,
    Nonlinear,
}

/// Noise-free regression function.
pub fn regression_fn(kind: RegressionKind, x: f64) -> f64 {
    match kind {
        RegressionKind::Linear => 0.8 * x + 0.3,
        RegressionKind::Nonlinear => (1.2 * x).sin() + 0.4 * (3.1 * x).sin(),
    }
}

/// `y = f(x) + N(0, noise_sd^2)`. Linear inputs cover `REGRESSION_DOMAIN`
/// uniformly; nonlinear inputs alternate between the two segments either side
/// of `REGRESSION_GAP`.
pub fn make_regression1d<T: Real>(kind: RegressionKind, n: usize, noise_sd: f64, seed: u64) -> Result<LabeledDataset<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("regression1d needs n >= 2".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument("noise_sd must be nonnegative".into()));
    }
    let mut rng = rng::stream(seed);
    let (lo, hi) = REGRESSION_DOMAIN;
    let (gap_lo, gap_hi) = REGRESSION_GAP;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let x = match kind {
            RegressionKind::Linear => rng.random_range(lo..hi),
            RegressionKind::Nonlinear if i % 2 == 0 => rng.random_range(lo..gap_lo),
            RegressionKind::Nonlinear => rng.random_range(gap_hi..hi),
        };
        let y = regression_fn(kind, x) + noise_sd * gauss(&mut rng);
        xs.push(T::lit(x));
        ys.push(T::lit(y));
    }
    let name = match kind {
        RegressionKind::Linear => "regression-linear",
        RegressionKind::Nonlinear => "regression-nonlinear",
    };
    Ok(LabeledDataset { inputs: xs, dim: 1, labels: Labels::Value(ys), problem_name: name.into(), seed, class_count: 0 })
}

/// Splits a 2D dataset into `(input[axis] > threshold, rest)`.
pub fn split_by_halfplane<T: Real>(
    data: &LabeledDataset<T>,
    axis: usize,
    threshold: f64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    if data.dim != 2 || axis > 1 {
        return Err(Error::InvalidArgument("split_by_halfplane needs 2D inputs and axis in {0, 1}".into()));
    }
    let (top, bottom): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| data.point(i)[axis].to_f64_lossy() > threshold);
    if top.is_empty() || bottom.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "{} above / {} below threshold {threshold} on axis {axis}",
            top.len(),
            bottom.len()
        )));
    }
    Ok((data.subset(&top), data.subset(&bottom)))
}
