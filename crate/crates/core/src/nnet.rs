//! Fixed-architecture feedforward models and their exact reverse-mode gradients.
//!
//! Parameters live in one flat vector. Each layer occupies a `fan_in x fan_out`
//! row-major weight block followed by a `fan_out` bias block, in order from the
//! input layer to the head. Hidden layers use `tanh`.
//!
//! All batched routines take inputs as a row-major `n x input_dim` slice and
//! push whole batches through `matmul`, which is what keeps posterior sampling
//! over tens of thousands of parameters affordable.

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{matmul, Real, Trans};
use crate::synthgen::{LabeledDataset, Labels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
}

/// Output head. The regression head carries the (known) observation noise
/// of its Gaussian likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    BinarySigmoid,
    MulticlassSoftmax,
    Regression { noise_sd: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_widths: &[usize], output_dim: usize, head: Head) -> Result<Self> {
        let spec = MlpSpec {
            input_dim,
            hidden_widths: hidden_widths.to_vec(),
            output_dim,
            activation: Activation::Tanh,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-logit binary classifier; `hidden_widths = []` gives logistic regression.
    pub fn binary(input_dim: usize, hidden_widths: &[usize]) -> Self {
        Self::new(input_dim, hidden_widths, 1, Head::BinarySigmoid).expect("valid binary spec")
    }

    pub fn softmax(input_dim: usize, hidden_widths: &[usize], classes: usize) -> Self {
        Self::new(input_dim, hidden_widths, classes, Head::MulticlassSoftmax).expect("valid softmax spec")
    }

    pub fn regression(input_dim: usize, hidden_widths: &[usize], noise_sd: f64) -> Self {
        Self::new(input_dim, hidden_widths, 1, Head::Regression { noise_sd }).expect("valid regression spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        match self.head {
            Head::BinarySigmoid if self.output_dim != 1 => Err(Error::InvalidArgument(
                "binary-sigmoid head requires output_dim = 1".into(),
            )),
            Head::MulticlassSoftmax if self.output_dim < 2 => Err(Error::InvalidArgument(
                "multiclass-softmax head requires output_dim >= 2".into(),
            )),
            Head::Regression { .. } if self.output_dim != 1 => Err(Error::InvalidArgument(
                "regression head requires output_dim = 1".into(),
            )),
            Head::Regression { noise_sd } if !(noise_sd.is_finite() && noise_sd > 0.0) => Err(
                Error::InvalidArgument("regression noise_sd must be positive".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Number of label classes (2 for the binary head, 0 for regression).
    pub fn class_count(&self) -> usize {
        match self.head {
            Head::BinarySigmoid => 2,
            Head::MulticlassSoftmax => self.output_dim,
            Head::Regression { .. } => 0,
        }
    }

    /// Number of scalar prediction targets `c` accepted by [`predict_target`].
    pub fn target_count(&self) -> usize {
        match self.head {
            Head::Regression { .. } => 1,
            _ => self.class_count(),
        }
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self.head, Head::Regression { .. })
    }

    /// Short model label used in reports, e.g. `logreg`, `mlp(8,8)`.
    pub fn label(&self) -> String {
        if self.hidden_widths.is_empty() {
            return match self.head {
                Head::BinarySigmoid => "logreg".into(),
                Head::MulticlassSoftmax => "softmax".into(),
                Head::Regression { .. } => "linear".into(),
            };
        }
        let widths: Vec<String> = self.hidden_widths.iter().map(|w| w.to_string()).collect();
        format!("mlp({})", widths.join(","))
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_widths.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_widths);
        w.push(self.output_dim);
        w
    }
}

/// `sum over consecutive layers of (fan_in + 1) * fan_out`.
pub fn param_count(spec: &MlpSpec) -> usize {
    spec.widths().windows(2).map(|p| (p[0] + 1) * p[1]).sum()
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

fn layout(spec: &MlpSpec) -> Vec<Layer> {
    let mut off = 0;
    spec.widths()
        .windows(2)
        .map(|p| {
            let l = Layer { fan_in: p[0], fan_out: p[1], w: off, b: off + p[0] * p[1] };
            off += (p[0] + 1) * p[1];
            l
        })
        .collect()
}

/// Flat parameter vector of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T = f64>(Vec<T>);

impl<T: Real> ParamVector<T> {
    pub fn new(spec: &MlpSpec, values: Vec<T>) -> Result<Self> {
        let d = param_count(spec);
        if values.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        ParamVector(vec![T::zero(); param_count(spec)])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        ParamVector(values)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Gradient of a scalar with respect to a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector<T = f64>(Vec<T>);

impl<T: Real> GradientVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient vector"));
        }
        Ok(GradientVector(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        GradientVector(values)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Weights `N(0, 1/fan_in)`, biases zero.
pub fn init_params<T: Real>(spec: &MlpSpec, seed: u64) -> ParamVector<T> {
    let mut rng = rng::stream(seed);
    let mut values = vec![T::zero(); param_count(spec)];
    for layer in layout(spec) {
        let scale = 1.0 / (layer.fan_in as f64).sqrt();
        for v in &mut values[layer.w..layer.b] {
            *v = rng::normal::<T, _>(&mut rng) * T::lit(scale);
        }
    }
    ParamVector(values)
}

fn check_params<T: Real>(spec: &MlpSpec, params: &ParamVector<T>) -> Result<()> {
    let d = param_count(spec);
    if params.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: params.len() });
    }
    Ok(())
}

fn check_inputs<T>(spec: &MlpSpec, xs: &[T], n: usize) -> Result<()> {
    if xs.len() != n * spec.input_dim {
        return Err(Error::DimensionMismatch { expected: n * spec.input_dim, got: xs.len() });
    }
    Ok(())
}

fn check_target(spec: &MlpSpec, c: usize) -> Result<()> {
    if c >= spec.target_count() {
        return Err(Error::InvalidClass { class: c, classes: spec.target_count() });
    }
    Ok(())
}

/// Activations recorded by a batched forward pass: `acts[0]` holds the inputs,
/// `acts[1..L]` the post-`tanh` hidden layers and `acts[L]` the head outputs.
pub(crate) struct Trace<T> {
    n: usize,
    acts: Vec<Vec<T>>,
}

impl<T: Real> Trace<T> {
    pub(crate) fn outputs(&self) -> &[T] {
        self.acts.last().expect("trace has an output layer")
    }
}

pub(crate) fn forward_trace<T: Real>(spec: &MlpSpec, params: &[T], xs: &[T], n: usize) -> Trace<T> {
    let layers = layout(spec);
    let mut acts: Vec<Vec<T>> = Vec::with_capacity(layers.len() + 1);
    acts.push(xs.to_vec());
    let last = layers.len() - 1;
    for (li, l) in layers.iter().enumerate() {
        let mut out = vec![T::zero(); n * l.fan_out];
        let bias = &params[l.b..l.b + l.fan_out];
        for row in out.chunks_exact_mut(l.fan_out) {
            row.copy_from_slice(bias);
        }
        matmul(
            n,
            l.fan_in,
            l.fan_out,
            T::one(),
            &acts[li],
            Trans::No,
            &params[l.w..l.b],
            Trans::No,
            T::one(),
            &mut out,
        );
        if li != last {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(out);
    }
    Trace { n, acts }
}

/// Back-propagates `dz_out` (`n x output_dim`) to every layer's pre-activation.
fn deltas<T: Real>(spec: &MlpSpec, params: &[T], trace: &Trace<T>, dz_out: Vec<T>) -> Vec<Vec<T>> {
    let layers = layout(spec);
    let n = trace.n;
    let mut ds: Vec<Vec<T>> = vec![Vec::new(); layers.len()];
    ds[layers.len() - 1] = dz_out;
    for li in (1..layers.len()).rev() {
        let l = layers[li];
        let mut prev = vec![T::zero(); n * l.fan_in];
        matmul(
            n,
            l.fan_out,
            l.fan_in,
            T::one(),
            &ds[li],
            Trans::No,
            &params[l.w..l.b],
            Trans::Yes,
            T::zero(),
            &mut prev,
        );
        for (d, &a) in prev.iter_mut().zip(&trace.acts[li]) {
            *d *= T::one() - a * a;
        }
        ds[li - 1] = prev;
    }
    ds
}

/// Sum over the batch of per-sample parameter gradients, given `dz_out`.
fn backward_sum<T: Real>(spec: &MlpSpec, params: &[T], trace: &Trace<T>, dz_out: Vec<T>) -> Vec<T> {
    let layers = layout(spec);
    let ds = deltas(spec, params, trace, dz_out);
    let mut grad = vec![T::zero(); params.len()];
    for (li, l) in layers.iter().enumerate() {
        matmul(
            l.fan_in,
            trace.n,
            l.fan_out,
            T::one(),
            &trace.acts[li],
            Trans::Yes,
            &ds[li],
            Trans::No,
            T::zero(),
            &mut grad[l.w..l.b],
        );
        let gb = &mut grad[l.b..l.b + l.fan_out];
        for row in ds[li].chunks_exact(l.fan_out) {
            for (g, &d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
    }
    grad
}

/// Per-sample parameter gradients as an `n x D` row-major matrix.
fn backward_rows<T: Real>(spec: &MlpSpec, params: &[T], trace: &Trace<T>, dz_out: Vec<T>) -> Vec<T> {
    let layers = layout(spec);
    let d = params.len();
    let ds = deltas(spec, params, trace, dz_out);
    let mut rows = vec![T::zero(); trace.n * d];
    for (i, row) in rows.chunks_exact_mut(d).enumerate() {
        for (li, l) in layers.iter().enumerate() {
            let a = &trace.acts[li][i * l.fan_in..(i + 1) * l.fan_in];
            let delta = &ds[li][i * l.fan_out..(i + 1) * l.fan_out];
            for (r, &ai) in a.iter().enumerate() {
                let dst = &mut row[l.w + r * l.fan_out..l.w + (r + 1) * l.fan_out];
                for (g, &dj) in dst.iter_mut().zip(delta) {
                    *g = ai * dj;
                }
            }
            row[l.b..l.b + l.fan_out].copy_from_slice(delta);
        }
    }
    rows
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn softmax_in_place<T: Real>(z: &mut [T]) {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Writes class probabilities (or the regression mean) for one output row.
fn head_values<T: Real>(spec: &MlpSpec, z: &[T], out: &mut [T]) {
    match spec.head {
        Head::BinarySigmoid => {
            let p = sigmoid(z[0]);
            out[0] = sigmoid(-z[0]);
            out[1] = p;
        }
        Head::MulticlassSoftmax => {
            out.copy_from_slice(z);
            softmax_in_place(out);
        }
        Head::Regression { .. } => out[0] = z[0],
    }
}

/// Head outputs (logits, or the regression mean) for a single input.
pub fn forward<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, x: &[T]) -> Result<Vec<T>> {
    check_params(spec, params)?;
    check_inputs(spec, x, 1)?;
    Ok(forward_trace(spec, params.as_slice(), x, 1).acts.pop().expect("output layer"))
}

/// Batched head outputs, `n x output_dim`.
pub fn forward_batch<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, xs: &[T], n: usize) -> Result<Vec<T>> {
    check_params(spec, params)?;
    check_inputs(spec, xs, n)?;
    Ok(forward_trace(spec, params.as_slice(), xs, n).acts.pop().expect("output layer"))
}

/// `p(y = c | x, params)`. Classification heads only.
pub fn predict_prob<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, x: &[T], c: usize) -> Result<T> {
    if !spec.is_classifier() {
        return Err(Error::InvalidArgument("predict_prob needs a classification head".into()));
    }
    predict_target(spec, params, x, c)
}

/// The scalar whose posterior variance is the epistemic target: the class
/// probability for classifiers, the predictive mean (`c = 0`) for regression.
pub fn predict_target<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, x: &[T], c: usize) -> Result<T> {
    check_target(spec, c)?;
    let z = forward(spec, params, x)?;
    let mut out = vec![T::zero(); spec.target_count()];
    head_values(spec, &z, &mut out);
    Ok(out[c])
}

/// All targets for a batch of inputs, `n x target_count` row-major.
pub fn predict_targets_batch<T: Real>(
    spec: &MlpSpec,
    params: &ParamVector<T>,
    xs: &[T],
    n: usize,
) -> Result<Vec<T>> {
    let z = forward_batch(spec, params, xs, n)?;
    let k = spec.target_count();
    let mut out = vec![T::zero(); n * k];
    for (zi, oi) in z.chunks_exact(spec.output_dim).zip(out.chunks_exact_mut(k)) {
        head_values(spec, zi, oi);
    }
    Ok(out)
}

/// `d target_c / d z` for each row of head outputs, scaled by `weights[i]`.
fn target_output_grads<T: Real>(spec: &MlpSpec, z: &[T], cs: &[usize], weights: Option<&[T]>) -> Vec<T> {
    let k = spec.output_dim;
    let mut dz = vec![T::zero(); z.len()];
    let mut probs = vec![T::zero(); spec.target_count()];
    for (i, (zi, di)) in z.chunks_exact(k).zip(dz.chunks_exact_mut(k)).enumerate() {
        let w = weights.map_or(T::one(), |w| w[i]);
        let c = cs[i];
        match spec.head {
            Head::BinarySigmoid => {
                let p = sigmoid(zi[0]);
                let s = p * (T::one() - p);
                di[0] = if c == 1 { w * s } else { -(w * s) };
            }
            Head::MulticlassSoftmax => {
                head_values(spec, zi, &mut probs);
                let pc = probs[c];
                for (j, d) in di.iter_mut().enumerate() {
                    let kron = if j == c { T::one() } else { T::zero() };
                    *d = w * pc * (kron - probs[j]);
                }
            }
            Head::Regression { .. } => di[0] = w,
        }
    }
    dz
}

/// Exact gradient of [`predict_prob`] with respect to every parameter.
pub fn grad_prob<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, x: &[T], c: usize) -> Result<GradientVector<T>> {
    if !spec.is_classifier() {
        return Err(Error::InvalidArgument("grad_prob needs a classification head".into()));
    }
    grad_target(spec, params, x, c)
}

/// Exact gradient of [`predict_target`].
pub fn grad_target<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, x: &[T], c: usize) -> Result<GradientVector<T>> {
    check_target(spec, c)?;
    check_params(spec, params)?;
    check_inputs(spec, x, 1)?;
    // p0 = 1 - p1 for the single-logit head, so its gradient is the exact negation.
    if matches!(spec.head, Head::BinarySigmoid) && c == 0 {
        let mut g = grad_target(spec, params, x, 1)?.into_vec();
        g.iter_mut().for_each(|v| *v = -*v);
        return Ok(GradientVector(g));
    }
    let trace = forward_trace(spec, params.as_slice(), x, 1);
    let dz = target_output_grads(spec, trace.outputs(), &[c], None);
    Ok(GradientVector(backward_sum(spec, params.as_slice(), &trace, dz)))
}

/// Per-input gradients of target `c` as an `n x D` row-major matrix.
pub fn grad_targets_batch<T: Real>(
    spec: &MlpSpec,
    params: &ParamVector<T>,
    xs: &[T],
    n: usize,
    c: usize,
) -> Result<Vec<T>> {
    check_target(spec, c)?;
    check_params(spec, params)?;
    check_inputs(spec, xs, n)?;
    let trace = forward_trace(spec, params.as_slice(), xs, n);
    let cs = vec![c; n];
    let dz = target_output_grads(spec, trace.outputs(), &cs, None);
    Ok(backward_rows(spec, params.as_slice(), &trace, dz))
}

/// `sum_i weights[i] * grad target_{cs[i]}(xs[i])` in a single backward pass.
///
/// With `weights = 1/T` this is the gradient of a mean of per-position
/// probabilities, as used for sequence-level estimates.
pub fn grad_weighted_targets<T: Real>(
    spec: &MlpSpec,
    params: &ParamVector<T>,
    xs: &[T],
    cs: &[usize],
    weights: &[T],
) -> Result<GradientVector<T>> {
    let n = cs.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
    }
    for &c in cs {
        check_target(spec, c)?;
    }
    check_params(spec, params)?;
    check_inputs(spec, xs, n)?;
    let trace = forward_trace(spec, params.as_slice(), xs, n);
    let dz = target_output_grads(spec, trace.outputs(), cs, Some(weights));
    Ok(GradientVector(backward_sum(spec, params.as_slice(), &trace, dz)))
}

fn check_labels<T: Real>(spec: &MlpSpec, labels: &Labels<T>, n: usize) -> Result<()> {
    match (labels, spec.head) {
        (Labels::Class(ys), Head::BinarySigmoid | Head::MulticlassSoftmax) => {
            if ys.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: ys.len() });
            }
            let k = spec.class_count();
            if let Some(&bad) = ys.iter().find(|&&y| y >= k) {
                return Err(Error::InvalidClass { class: bad, classes: k });
            }
            Ok(())
        }
        (Labels::Value(ys), Head::Regression { .. }) => {
            if ys.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: ys.len() });
            }
            Ok(())
        }
        _ => Err(Error::InvalidArgument("label kind does not match the model head".into())),
    }
}

/// Per-sample negative log-likelihoods and their derivatives w.r.t. the head outputs.
fn nll_and_output_grads<T: Real>(spec: &MlpSpec, z: &[T], labels: &Labels<T>) -> (Vec<T>, Vec<T>) {
    let k = spec.output_dim;
    let n = z.len() / k;
    let mut nll = Vec::with_capacity(n);
    let mut dz = vec![T::zero(); z.len()];
    match (spec.head, labels) {
        (Head::BinarySigmoid, Labels::Class(ys)) => {
            for i in 0..n {
                let zi = z[i];
                let y = if ys[i] == 1 { T::one() } else { T::zero() };
                nll.push(softplus(zi) - y * zi);
                dz[i] = sigmoid(zi) - y;
            }
        }
        (Head::MulticlassSoftmax, Labels::Class(ys)) => {
            for i in 0..n {
                let zi = &z[i * k..(i + 1) * k];
                let m = zi.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = m + zi.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
                nll.push(lse - zi[ys[i]]);
                let di = &mut dz[i * k..(i + 1) * k];
                for (j, d) in di.iter_mut().enumerate() {
                    *d = (zi[j] - lse).exp();
                }
                di[ys[i]] -= T::one();
            }
        }
        (Head::Regression { noise_sd }, Labels::Value(ys)) => {
            let var = T::lit(noise_sd * noise_sd);
            let log_norm = T::lit(0.5 * (2.0 * std::f64::consts::PI * noise_sd * noise_sd).ln());
            for i in 0..n {
                let r = z[i] - ys[i];
                nll.push(T::lit(0.5) * r * r / var + log_norm);
                dz[i] = r / var;
            }
        }
        _ => unreachable!("labels checked against head"),
    }
    (nll, dz)
}

/// Regularised loss `mean NLL + (lambda/2) |theta|^2` and its exact gradient.
pub fn grad_loss<T: Real>(
    spec: &MlpSpec,
    params: &ParamVector<T>,
    data: &LabeledDataset<T>,
    prior_precision: T,
) -> Result<(T, GradientVector<T>)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    check_params(spec, params)?;
    check_inputs(spec, &data.inputs, n)?;
    check_labels(spec, &data.labels, n)?;
    let theta = params.as_slice();
    let trace = forward_trace(spec, theta, &data.inputs, n);
    let (nll, mut dz) = nll_and_output_grads(spec, trace.outputs(), &data.labels);
    let inv_n = T::one() / T::lit(n as f64);
    dz.iter_mut().for_each(|v| *v *= inv_n);
    let mut grad = backward_sum(spec, theta, &trace, dz);
    let mut loss = nll.into_iter().sum::<T>() * inv_n;
    if prior_precision != T::zero() {
        loss += T::lit(0.5) * prior_precision * crate::scalar::sq_norm(theta);
        for (g, &t) in grad.iter_mut().zip(theta) {
            *g += prior_precision * t;
        }
    }
    Ok((loss, GradientVector(grad)))
}

/// Loss value only (forward pass), same convention as [`grad_loss`].
pub fn loss<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, data: &LabeledDataset<T>, prior_precision: T) -> Result<T> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    check_params(spec, params)?;
    check_inputs(spec, &data.inputs, n)?;
    check_labels(spec, &data.labels, n)?;
    let trace = forward_trace(spec, params.as_slice(), &data.inputs, n);
    let (nll, _) = nll_and_output_grads(spec, trace.outputs(), &data.labels);
    let mean = nll.into_iter().sum::<T>() / T::lit(n as f64);
    Ok(mean + T::lit(0.5) * prior_precision * crate::scalar::sq_norm(params.as_slice()))
}

/// Per-sample NLL gradients (no prior term) as an `n x D` row-major matrix.
pub fn per_sample_loss_grads<T: Real>(
    spec: &MlpSpec,
    params: &ParamVector<T>,
    xs: &[T],
    labels: &Labels<T>,
) -> Result<Vec<T>> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    check_params(spec, params)?;
    check_inputs(spec, xs, n)?;
    check_labels(spec, labels, n)?;
    let trace = forward_trace(spec, params.as_slice(), xs, n);
    let (_, dz) = nll_and_output_grads(spec, trace.outputs(), labels);
    Ok(backward_rows(spec, params.as_slice(), &trace, dz))
}

/// Classification accuracy (argmax) or RMSE for regression, on `data`.
pub fn fit_metric<T: Real>(spec: &MlpSpec, params: &ParamVector<T>, data: &LabeledDataset<T>) -> Result<f64> {
    let n = data.len();
    let preds = predict_targets_batch(spec, params, &data.inputs, n)?;
    let k = spec.target_count();
    match &data.labels {
        Labels::Class(ys) => {
            let correct = preds
                .chunks_exact(k)
                .zip(ys)
                .filter(|(p, &y)| {
                    let best = p
                        .iter()
                        .enumerate()
                        .fold((0, T::neg_infinity()), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc })
                        .0;
                    best == y
                })
                .count();
            Ok(correct as f64 / n as f64)
        }
        Labels::Value(ys) => {
            let mse: f64 = preds
                .iter()
                .zip(ys)
                .map(|(p, y)| {
                    let r = (*p - *y).to_f64_lossy();
                    r * r
                })
                .sum::<f64>()
                / n as f64;
            Ok(mse.sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_rng_params(spec: &MlpSpec, seed: u64) -> ParamVector<f64> {
        init_params(spec, seed)
    }

    #[test]
    fn param_counts() {
        assert_eq!(param_count(&MlpSpec::binary(2, &[])), 3);
        assert_eq!(param_count(&MlpSpec::binary(2, &[8, 8])), 105);
        assert_eq!(param_count(&MlpSpec::binary(2, &[32, 32])), 1185);
        assert_eq!(param_count(&MlpSpec::regression(1, &[32], 0.1)), 97);
        assert_eq!(param_count(&MlpSpec::regression(1, &[], 0.1)), 2);
        // four-logit heads reproduce the published ladder counts
        assert_eq!(param_count(&MlpSpec::softmax(2, &[], 4)), 12);
        assert_eq!(param_count(&MlpSpec::softmax(2, &[8, 8], 4)), 132);
        assert_eq!(param_count(&MlpSpec::softmax(2, &[32, 32], 4)), 1284);
        assert_eq!(param_count(&MlpSpec::softmax(2, &[1028, 1028], 4)), 1_065_012);
    }

    #[test]
    fn mlp_8_8_count_matches_formula() {
        let want = (2 + 1) * 8 + (8 + 1) * 8 + (8 + 1);
        assert_eq!(param_count(&MlpSpec::binary(2, &[8, 8])), want);
        assert_eq!(want, 105);
        assert_eq!(init_params::<f64>(&MlpSpec::binary(2, &[8, 8]), 3).len(), want);
    }

    #[test]
    fn invalid_heads_rejected() {
        assert!(MlpSpec::new(2, &[], 2, Head::BinarySigmoid).is_err());
        assert!(MlpSpec::new(2, &[], 1, Head::MulticlassSoftmax).is_err());
        assert!(MlpSpec::new(2, &[0], 1, Head::BinarySigmoid).is_err());
        assert!(MlpSpec::new(1, &[], 1, Head::Regression { noise_sd: 0.0 }).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let spec = MlpSpec::binary(2, &[]);
        let a: ParamVector<f64> = init_params(&spec, 0);
        let b: ParamVector<f64> = init_params(&spec, 0);
        assert_eq!(a.len(), 3);
        assert_eq!(a.as_slice()[2], 0.0);
        assert_eq!(a, b);
        let c: ParamVector<f64> = init_params(&spec, 1);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_params_give_uninformative_outputs() {
        let bin = MlpSpec::binary(2, &[4]);
        let z = forward(&bin, &ParamVector::zeros(&bin), &[0.3, -1.0]).unwrap();
        assert_eq!(z, vec![0.0]);
        assert_eq!(predict_prob(&bin, &ParamVector::zeros(&bin), &[0.3, -1.0], 1).unwrap(), 0.5);

        let sm = MlpSpec::softmax(2, &[], 4);
        let zs = forward(&sm, &ParamVector::zeros(&sm), &[1.0, 2.0]).unwrap();
        assert!(zs.iter().all(|&v| v == 0.0));
        for c in 0..4 {
            assert!((predict_prob::<f64>(&sm, &ParamVector::zeros(&sm), &[1.0, 2.0], c).unwrap() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_bad_dims_and_classes() {
        let spec = MlpSpec::softmax(2, &[3], 3);
        let p = spec_rng_params(&spec, 1);
        assert!(matches!(forward(&spec, &p, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(predict_prob(&spec, &p, &[1.0, 0.0], 3), Err(Error::InvalidClass { .. })));
        let bin = MlpSpec::binary(2, &[]);
        let pb = spec_rng_params(&bin, 1);
        assert!(predict_prob(&bin, &pb, &[1.0, 0.0], 2).is_err());
    }

    #[test]
    fn softmax_normalises_and_is_pure() {
        let spec = MlpSpec::softmax(2, &[5, 4], 4);
        let p = spec_rng_params(&spec, 9);
        let x = [0.7, -0.2];
        let total: f64 = (0..4).map(|c| predict_prob(&spec, &p, &x, c).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert_eq!(forward(&spec, &p, &x).unwrap(), forward(&spec, &p, &x).unwrap());
    }

    #[test]
    fn extreme_logits_stay_strictly_inside_unit_interval() {
        let spec = MlpSpec::binary(1, &[]);
        let p = ParamVector::new(&spec, vec![30.0, 0.0]).unwrap();
        let hi = predict_prob(&spec, &p, &[1.0], 1).unwrap();
        let lo = predict_prob(&spec, &p, &[-1.0], 1).unwrap();
        assert!(hi < 1.0 && hi > 0.5);
        assert!(lo > 0.0 && lo < 0.5);
    }

    #[test]
    fn binary_class_gradients_are_exact_negations() {
        let spec = MlpSpec::binary(2, &[6, 3]);
        let p = spec_rng_params(&spec, 4);
        let g1 = grad_prob(&spec, &p, &[0.4, 1.1], 1).unwrap().into_vec();
        let g0 = grad_prob(&spec, &p, &[0.4, 1.1], 0).unwrap().into_vec();
        for (a, b) in g1.iter().zip(&g0) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn batched_rows_match_single_gradients() {
        let spec = MlpSpec::softmax(2, &[5], 3);
        let p = spec_rng_params(&spec, 2);
        let xs = [0.1, 0.2, -1.0, 0.5, 2.0, -0.3];
        let rows = grad_targets_batch(&spec, &p, &xs, 3, 2).unwrap();
        let d = param_count(&spec);
        for i in 0..3 {
            let g = grad_prob(&spec, &p, &xs[2 * i..2 * i + 2], 2).unwrap();
            for (a, b) in rows[i * d..(i + 1) * d].iter().zip(g.as_slice()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn f32_models_run() {
        let spec = MlpSpec::binary(2, &[4]);
        let p: ParamVector<f32> = init_params(&spec, 0);
        let prob = predict_prob(&spec, &p, &[0.5f32, 0.5], 1).unwrap();
        assert!(prob > 0.0 && prob < 1.0);
        let g = grad_prob(&spec, &p, &[0.5f32, 0.5], 1).unwrap();
        assert_eq!(g.len(), param_count(&spec));
    }
}
