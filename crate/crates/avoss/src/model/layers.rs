//! Layer primitives with explicit forward/backward passes.
//!
//! Activations are time-major (T, channels) matrices. Every `backward` takes
//! the upstream gradient plus whatever the forward cached, accumulates into a
//! same-shaped parameter-gradient struct and returns the input gradient.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const NORM_EPS: f64 = 1e-8;

fn uniform_init(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Pointwise (1x1) convolution over frames: y = x * W^T + b.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// (out, in)
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn init(rng: &mut ChaCha8Rng, out: usize, input: usize) -> Self {
        let w = Array2::from_shape_vec((out, input), uniform_init(rng, input, out * input))
            .expect("shape");
        Linear { w, b: Array1::zeros(out) }
    }

    pub fn zeros(out: usize, input: usize) -> Self {
        Linear { w: Array2::zeros((out, input)), b: Array1::zeros(out) }
    }

    pub fn zeros_like(&self) -> Self {
        Linear { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.raw_dim()) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    pub fn forward_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }

    /// `x` is the forward input. Returns the input gradient.
    pub fn backward(&self, x: &Array2<f64>, gy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &gy.t().dot(x);
        grad.b += &gy.sum_axis(Axis(0));
        gy.dot(&self.w)
    }

    pub fn backward_vec(&self, x: &Array1<f64>, gy: &Array1<f64>, grad: &mut Linear) -> Array1<f64> {
        let outer = gy
            .view()
            .insert_axis(Axis(1))
            .dot(&x.view().insert_axis(Axis(0)));
        grad.w += &outer;
        grad.b += gy;
        self.w.t().dot(gy)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Per-channel parametric ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Prelu {
    pub a: Array1<f64>,
}

impl Prelu {
    pub fn init(channels: usize) -> Self {
        Prelu { a: Array1::from_elem(channels, 0.25) }
    }

    pub fn zeros_like(&self) -> Self {
        Prelu { a: Array1::zeros(self.a.raw_dim()) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.clone();
        for mut row in y.rows_mut() {
            Zip::from(&mut row).and(&self.a).for_each(|v, &a| {
                if *v < 0.0 {
                    *v *= a;
                }
            });
        }
        y
    }

    /// `x` is the pre-activation input.
    pub fn backward(&self, x: &Array2<f64>, gy: &Array2<f64>, grad: &mut Prelu) -> Array2<f64> {
        let mut gx = gy.clone();
        for ((mut grow, xrow), _) in gx.rows_mut().into_iter().zip(x.rows()).zip(0..) {
            Zip::from(&mut grow)
                .and(&xrow)
                .and(&self.a)
                .for_each(|g, &xv, &a| {
                    if xv < 0.0 {
                        *g *= a;
                    }
                });
        }
        for (xrow, gyrow) in x.rows().into_iter().zip(gy.rows()) {
            Zip::from(&mut grad.a)
                .and(&xrow)
                .and(&gyrow)
                .for_each(|ga, &xv, &g| {
                    if xv < 0.0 {
                        *ga += g * xv;
                    }
                });
        }
        gx
    }

    pub fn param_count(&self) -> usize {
        self.a.len()
    }
}

/// Cache shared by the global-layer-norm backward pass.
#[derive(Debug, Clone)]
pub struct GlnCache {
    pub xhat: Array2<f64>,
    pub inv_std: f64,
}

/// Global layer normalization: statistics over every (frame, channel)
/// element, per-channel affine. Applied to a single vector (T = 1) this is a
/// plain layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Gln {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl Gln {
    pub fn init(channels: usize) -> Self {
        Gln { gamma: Array1::ones(channels), beta: Array1::zeros(channels) }
    }

    pub fn zeros_like(&self) -> Self {
        Gln { gamma: Array1::zeros(self.gamma.raw_dim()), beta: Array1::zeros(self.beta.raw_dim()) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, GlnCache) {
        let m = x.len() as f64;
        let mean = x.sum() / m;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let inv_std = 1.0 / (var + NORM_EPS).sqrt();
        let xhat = x.mapv(|v| (v - mean) * inv_std);
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            Zip::from(&mut row)
                .and(&self.gamma)
                .and(&self.beta)
                .for_each(|v, &g, &b| *v = *v * g + b);
        }
        (y, GlnCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &GlnCache, gy: &Array2<f64>, grad: &mut Gln) -> Array2<f64> {
        let m = gy.len() as f64;
        for (xrow, gyrow) in cache.xhat.rows().into_iter().zip(gy.rows()) {
            Zip::from(&mut grad.gamma)
                .and(&xrow)
                .and(&gyrow)
                .for_each(|gg, &xh, &g| *gg += g * xh);
            Zip::from(&mut grad.beta).and(&gyrow).for_each(|gb, &g| *gb += g);
        }
        // h = gamma .* gy ; gx = (h - mean(h) - xhat * mean(h .* xhat)) * inv_std
        let mut h = gy.clone();
        for mut row in h.rows_mut() {
            Zip::from(&mut row).and(&self.gamma).for_each(|v, &g| *v *= g);
        }
        let h_mean = h.sum() / m;
        let hx_mean = h
            .iter()
            .zip(cache.xhat.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / m;
        Zip::from(&mut h).and(&cache.xhat).for_each(|v, &xh| {
            *v = (*v - h_mean - xh * hx_mean) * cache.inv_std;
        });
        h
    }

    pub fn forward_vec(&self, x: &Array1<f64>) -> (Array1<f64>, GlnCache) {
        let mat = x.view().insert_axis(Axis(0)).to_owned();
        let (y, cache) = self.forward(&mat);
        (y.index_axis(Axis(0), 0).to_owned(), cache)
    }

    pub fn backward_vec(&self, cache: &GlnCache, gy: &Array1<f64>, grad: &mut Gln) -> Array1<f64> {
        let gmat = gy.view().insert_axis(Axis(0)).to_owned();
        self.backward(cache, &gmat, grad)
            .index_axis(Axis(0), 0)
            .to_owned()
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

/// Dilated depthwise convolution over time, zero-padded to keep T.
#[derive(Debug, Clone, PartialEq)]
pub struct Depthwise {
    /// (kernel, channels)
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub dilation: usize,
}

impl Depthwise {
    pub fn init(rng: &mut ChaCha8Rng, kernel: usize, channels: usize, dilation: usize) -> Self {
        let w = Array2::from_shape_vec(
            (kernel, channels),
            uniform_init(rng, kernel, kernel * channels),
        )
        .expect("shape");
        Depthwise { w, b: Array1::zeros(channels), dilation }
    }

    pub fn zeros_like(&self) -> Self {
        Depthwise {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
            dilation: self.dilation,
        }
    }

    fn pad(&self) -> usize {
        (self.w.nrows() - 1) * self.dilation / 2
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let t_len = x.nrows();
        let pad = self.pad() as isize;
        let mut y = Array2::zeros(x.raw_dim());
        for mut row in y.rows_mut() {
            row.assign(&self.b);
        }
        for k in 0..self.w.nrows() {
            let shift = (k * self.dilation) as isize - pad;
            let wrow = self.w.row(k);
            for t in 0..t_len {
                let src = t as isize + shift;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let xrow = x.row(src as usize);
                Zip::from(&mut y.row_mut(t))
                    .and(&wrow)
                    .and(&xrow)
                    .for_each(|yv, &wv, &xv| *yv += wv * xv);
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &Array2<f64>,
        gy: &Array2<f64>,
        grad: &mut Depthwise,
    ) -> Array2<f64> {
        let t_len = x.nrows();
        let pad = self.pad() as isize;
        let mut gx = Array2::zeros(x.raw_dim());
        for k in 0..self.w.nrows() {
            let shift = (k * self.dilation) as isize - pad;
            let wrow = self.w.row(k);
            let mut gwrow = grad.w.row_mut(k);
            for t in 0..t_len {
                let src = t as isize + shift;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let src = src as usize;
                let gyrow = gy.row(t);
                Zip::from(&mut gwrow)
                    .and(&gyrow)
                    .and(&x.row(src))
                    .for_each(|gw, &g, &xv| *gw += g * xv);
                Zip::from(&mut gx.row_mut(src))
                    .and(&wrow)
                    .and(&gyrow)
                    .for_each(|gxv, &wv, &g| *gxv += wv * g);
            }
        }
        grad.b += &gy.sum_axis(Axis(0));
        gx
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Full temporal convolution with edge-replication padding. Used in the
/// visual encoder so constant inputs stay constant through time.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConv {
    /// One (out, in) matrix per tap.
    pub taps: Vec<Array2<f64>>,
    pub b: Array1<f64>,
}

impl TemporalConv {
    pub fn init(rng: &mut ChaCha8Rng, kernel: usize, out: usize, input: usize) -> Self {
        let fan_in = kernel * input;
        let taps = (0..kernel)
            .map(|_| {
                Array2::from_shape_vec((out, input), uniform_init(rng, fan_in, out * input))
                    .expect("shape")
            })
            .collect();
        TemporalConv { taps, b: Array1::zeros(out) }
    }

    pub fn zeros_like(&self) -> Self {
        TemporalConv {
            taps: self.taps.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    fn src_index(t: usize, k: usize, pad: usize, t_len: usize) -> usize {
        (t + k).saturating_sub(pad).min(t_len - 1)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let t_len = x.nrows();
        let pad = (self.taps.len() - 1) / 2;
        let mut y = Array2::zeros((t_len, self.b.len()));
        for mut row in y.rows_mut() {
            row.assign(&self.b);
        }
        for (k, w) in self.taps.iter().enumerate() {
            for t in 0..t_len {
                let src = Self::src_index(t, k, pad, t_len);
                let contrib = w.dot(&x.row(src));
                Zip::from(&mut y.row_mut(t))
                    .and(&contrib)
                    .for_each(|yv, &c| *yv += c);
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &Array2<f64>,
        gy: &Array2<f64>,
        grad: &mut TemporalConv,
    ) -> Array2<f64> {
        let t_len = x.nrows();
        let pad = (self.taps.len() - 1) / 2;
        let mut gx = Array2::zeros(x.raw_dim());
        for (k, w) in self.taps.iter().enumerate() {
            let gw = &mut grad.taps[k];
            for t in 0..t_len {
                let src = Self::src_index(t, k, pad, t_len);
                let gyrow = gy.row(t);
                let xrow = x.row(src);
                *gw += &gyrow
                    .insert_axis(Axis(1))
                    .dot(&xrow.insert_axis(Axis(0)));
                let back = w.t().dot(&gyrow);
                Zip::from(&mut gx.row_mut(src))
                    .and(&back)
                    .for_each(|g, &v| *g += v);
            }
        }
        grad.b += &gy.sum_axis(Axis(0));
        gx
    }

    pub fn param_count(&self) -> usize {
        self.taps.iter().map(|t| t.len()).sum::<usize>() + self.b.len()
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// `x` is the pre-activation input.
pub fn relu_backward(x: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
    let mut gx = gy.clone();
    Zip::from(&mut gx).and(x).for_each(|g, &xv| {
        if xv <= 0.0 {
            *g = 0.0;
        }
    });
    gx
}

pub fn sigmoid(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

/// `y` is the sigmoid output.
pub fn sigmoid_backward(y: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
    let mut gx = gy.clone();
    Zip::from(&mut gx).and(y).for_each(|g, &yv| *g *= yv * (1.0 - yv));
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rand_mat(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Scalar objective for finite-difference checks: weighted sum of the
    /// layer output with fixed pseudo-random weights.
    fn probe_weights(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Array2<f64> {
        rand_mat(rng, t, c)
    }

    fn loss_of(y: &Array2<f64>, probe: &Array2<f64>) -> f64 {
        y.iter().zip(probe.iter()).map(|(a, b)| a * b).sum()
    }

    fn assert_close(analytic: f64, fd: f64, ctx: &str) {
        let denom = analytic.abs().max(fd.abs()).max(1e-6);
        assert!(
            ((analytic - fd) / denom).abs() < 1e-5,
            "{ctx}: analytic={analytic} fd={fd}"
        );
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Linear::init(&mut rng, 5, 4);
        let x = rand_mat(&mut rng, 7, 4);
        let probe = probe_weights(&mut rng, 7, 5);
        let mut grad = layer.zeros_like();
        let gx = layer.backward(&x, &probe, &mut grad);
        let h = 1e-6;
        for idx in [(0, 0), (2, 3), (4, 1)] {
            let orig = layer.w[idx];
            layer.w[idx] = orig + h;
            let hi = loss_of(&layer.forward(&x), &probe);
            layer.w[idx] = orig - h;
            let lo = loss_of(&layer.forward(&x), &probe);
            layer.w[idx] = orig;
            assert_close(grad.w[idx], (hi - lo) / (2.0 * h), "linear w");
        }
        let mut x2 = x.clone();
        let orig = x2[(3, 2)];
        x2[(3, 2)] = orig + h;
        let hi = loss_of(&layer.forward(&x2), &probe);
        x2[(3, 2)] = orig - h;
        let lo = loss_of(&layer.forward(&x2), &probe);
        assert_close(gx[(3, 2)], (hi - lo) / (2.0 * h), "linear x");
    }

    #[test]
    fn prelu_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = Prelu::init(4);
        layer.a.iter_mut().for_each(|a| *a = rng.gen_range(0.1..0.5));
        let x = rand_mat(&mut rng, 6, 4);
        let probe = probe_weights(&mut rng, 6, 4);
        let mut grad = layer.zeros_like();
        let gx = layer.backward(&x, &probe, &mut grad);
        let h = 1e-6;
        for c in 0..4 {
            let orig = layer.a[c];
            layer.a[c] = orig + h;
            let hi = loss_of(&layer.forward(&x), &probe);
            layer.a[c] = orig - h;
            let lo = loss_of(&layer.forward(&x), &probe);
            layer.a[c] = orig;
            assert_close(grad.a[c], (hi - lo) / (2.0 * h), "prelu a");
        }
        let mut x2 = x.clone();
        let orig = x2[(1, 1)];
        x2[(1, 1)] = orig + h;
        let hi = loss_of(&layer.forward(&x2), &probe);
        x2[(1, 1)] = orig - h;
        let lo = loss_of(&layer.forward(&x2), &probe);
        assert_close(gx[(1, 1)], (hi - lo) / (2.0 * h), "prelu x");
    }

    #[test]
    fn gln_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = Gln::init(4);
        layer.gamma.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
        layer.beta.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
        let x = rand_mat(&mut rng, 5, 4);
        let probe = probe_weights(&mut rng, 5, 4);
        let (_, cache) = layer.forward(&x);
        let mut grad = layer.zeros_like();
        let gx = layer.backward(&cache, &probe, &mut grad);
        let h = 1e-6;
        for c in 0..4 {
            let orig = layer.gamma[c];
            layer.gamma[c] = orig + h;
            let hi = loss_of(&layer.forward(&x).0, &probe);
            layer.gamma[c] = orig - h;
            let lo = loss_of(&layer.forward(&x).0, &probe);
            layer.gamma[c] = orig;
            assert_close(grad.gamma[c], (hi - lo) / (2.0 * h), "gln gamma");
        }
        for idx in [(0, 0), (2, 3), (4, 2)] {
            let mut x2 = x.clone();
            let orig = x2[idx];
            x2[idx] = orig + h;
            let hi = loss_of(&layer.forward(&x2).0, &probe);
            x2[idx] = orig - h;
            let lo = loss_of(&layer.forward(&x2).0, &probe);
            assert_close(gx[idx], (hi - lo) / (2.0 * h), "gln x");
        }
    }

    #[test]
    fn depthwise_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut layer = Depthwise::init(&mut rng, 3, 4, 2);
        let x = rand_mat(&mut rng, 9, 4);
        let probe = probe_weights(&mut rng, 9, 4);
        let mut grad = layer.zeros_like();
        let gx = layer.backward(&x, &probe, &mut grad);
        let h = 1e-6;
        for idx in [(0, 0), (1, 2), (2, 3)] {
            let orig = layer.w[idx];
            layer.w[idx] = orig + h;
            let hi = loss_of(&layer.forward(&x), &probe);
            layer.w[idx] = orig - h;
            let lo = loss_of(&layer.forward(&x), &probe);
            layer.w[idx] = orig;
            assert_close(grad.w[idx], (hi - lo) / (2.0 * h), "dconv w");
        }
        for idx in [(0, 1), (4, 0), (8, 3)] {
            let mut x2 = x.clone();
            let orig = x2[idx];
            x2[idx] = orig + h;
            let hi = loss_of(&layer.forward(&x2), &probe);
            x2[idx] = orig - h;
            let lo = loss_of(&layer.forward(&x2), &probe);
            assert_close(gx[idx], (hi - lo) / (2.0 * h), "dconv x");
        }
    }

    #[test]
    fn temporal_conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut layer = TemporalConv::init(&mut rng, 3, 5, 3);
        let x = rand_mat(&mut rng, 6, 3);
        let probe = probe_weights(&mut rng, 6, 5);
        let mut grad = layer.zeros_like();
        let gx = layer.backward(&x, &probe, &mut grad);
        let h = 1e-6;
        for (k, idx) in [(0usize, (0, 0)), (1, (3, 2)), (2, (4, 1))] {
            let orig = layer.taps[k][idx];
            layer.taps[k][idx] = orig + h;
            let hi = loss_of(&layer.forward(&x), &probe);
            layer.taps[k][idx] = orig - h;
            let lo = loss_of(&layer.forward(&x), &probe);
            layer.taps[k][idx] = orig;
            assert_close(grad.taps[k][idx], (hi - lo) / (2.0 * h), "tconv w");
        }
        for idx in [(0, 0), (5, 2), (3, 1)] {
            let mut x2 = x.clone();
            let orig = x2[idx];
            x2[idx] = orig + h;
            let hi = loss_of(&layer.forward(&x2), &probe);
            x2[idx] = orig - h;
            let lo = loss_of(&layer.forward(&x2), &probe);
            assert_close(gx[idx], (hi - lo) / (2.0 * h), "tconv x");
        }
    }

    #[test]
    fn temporal_conv_keeps_constant_input_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layer = TemporalConv::init(&mut rng, 3, 4, 2);
        let x = Array2::from_shape_fn((10, 2), |(_, c)| 0.3 + c as f64);
        let y = layer.forward(&x);
        for t in 1..10 {
            for c in 0..4 {
                assert_eq!(y[(t, c)], y[(0, c)], "row {t} differs");
            }
        }
    }

    #[test]
    fn depthwise_identity_kernel_passes_through() {
        let mut layer = Depthwise {
            w: Array2::zeros((3, 2)),
            b: Array1::zeros(2),
            dilation: 1,
        };
        layer.w.row_mut(1).fill(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_mat(&mut rng, 8, 2);
        assert_eq!(layer.forward(&x), x);
    }
}
