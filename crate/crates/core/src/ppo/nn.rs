//! Dense tanh networks stored in flat parameter vectors.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Layer sizes of one network and where its parameters start in the flat
/// vector. Each layer stores `W` (out × in, row-major) followed by `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
    pub offset: usize,
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>, offset: usize) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self { sizes, offset }
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Offsets of `W` and `b` of layer `k` in the flat vector.
    pub fn layer_offsets(&self, k: usize) -> (usize, usize) {
        let mut off = self.offset;
        for w in self.sizes.windows(2).take(k) {
            off += w[1] * w[0] + w[1];
        }
        let (i, o) = (self.sizes[k], self.sizes[k + 1]);
        (off, off + o * i)
    }

    pub fn end(&self) -> usize {
        self.offset + self.param_count()
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    pub batch: usize,
    /// `acts[k]` is the input to layer `k`; the last entry is the output.
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("forward has run")
    }
}

/// `c = a · bᵀ` style products through `dgemm` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds row-major views of the given slices,
    // and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Batched forward pass; `x` is `batch × input`, row-major. Hidden layers use
/// tanh, the output layer is linear.
pub fn forward(params: &[f64], shape: &MlpShape, x: &[f64], batch: usize, cache: &mut MlpCache) {
    assert_eq!(x.len(), batch * shape.input());
    cache.batch = batch;
    cache.acts.resize(shape.layers() + 1, Vec::new());
    cache.acts[0].clear();
    cache.acts[0].extend_from_slice(x);
    for k in 0..shape.layers() {
        let (i, o) = (shape.sizes[k], shape.sizes[k + 1]);
        let (w_off, b_off) = shape.layer_offsets(k);
        let (head, tail) = cache.acts.split_at_mut(k + 1);
        let input = &head[k];
        let out = &mut tail[0];
        out.resize(batch * o, 0.0);
        let bias = &params[b_off..b_off + o];
        for row in out.chunks_exact_mut(o) {
            row.copy_from_slice(bias);
        }
        // out (batch×o) += input (batch×i) · Wᵀ (i×o)
        gemm(batch, i, o, input, i as isize, 1, &params[w_off..], 1, i as isize, 1.0, out);
        if k + 1 < shape.layers() {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
    }
}

/// Backpropagates `d_out` (`batch × output`) through the cached pass,
/// accumulating parameter gradients into `grad` (same layout as `params`).
pub fn backward(params: &[f64], shape: &MlpShape, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) {
    let batch = cache.batch;
    assert_eq!(d_out.len(), batch * shape.output());
    let mut dz = d_out.to_vec();
    for k in (0..shape.layers()).rev() {
        let (i, o) = (shape.sizes[k], shape.sizes[k + 1]);
        let (w_off, b_off) = shape.layer_offsets(k);
        let input = &cache.acts[k];
        // dW (o×i) += dzᵀ (o×batch) · input (batch×i)
        gemm(o, batch, i, &dz, 1, o as isize, input, i as isize, 1, 1.0, &mut grad[w_off..w_off + o * i]);
        let db = &mut grad[b_off..b_off + o];
        for row in dz.chunks_exact(o) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        if k == 0 {
            break;
        }
        // d input (batch×i) = dz (batch×o) · W (o×i), then through tanh
        let mut da = vec![0.0; batch * i];
        gemm(batch, o, i, &dz, o as isize, 1, &params[w_off..], i as isize, 1, 0.0, &mut da);
        for (d, a) in da.iter_mut().zip(input) {
            *d *= 1.0 - a * a;
        }
        dz = da;
    }
}

/// Orthogonal initialization with per-layer gains; biases start at zero.
pub fn init_orthogonal(params: &mut [f64], shape: &MlpShape, gains: &[f64], rng: &mut impl Rng) {
    assert_eq!(gains.len(), shape.layers());
    for k in 0..shape.layers() {
        let (i, o) = (shape.sizes[k], shape.sizes[k + 1]);
        let (w_off, b_off) = shape.layer_offsets(k);
        let w = orthogonal(o, i, gains[k], rng);
        params[w_off..w_off + o * i].copy_from_slice(&w);
        params[b_off..b_off + o].iter_mut().for_each(|b| *b = 0.0);
    }
}

/// Row-major `rows × cols` matrix with orthonormal rows or columns, scaled by `gain`.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> Vec<f64> {
    let (tall_r, tall_c) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall_r, tall_c, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes the distribution uniform over orthogonal matrices
    for j in 0..tall_c {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(gain * q[(r, c)]);
        }
    }
    out
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Scales `grad` so its L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / (norm + 1e-6);
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_forward(params: &[f64], shape: &MlpShape, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for k in 0..shape.layers() {
            let (i, o) = (shape.sizes[k], shape.sizes[k + 1]);
            let (w, b) = shape.layer_offsets(k);
            let mut z: Vec<f64> = (0..o)
                .map(|r| params[b + r] + (0..i).map(|c| params[w + r * i + c] * a[c]).sum::<f64>())
                .collect();
            if k + 1 < shape.layers() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        a
    }

    #[test]
    fn batched_forward_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = MlpShape::new(vec![5, 7, 6, 3], 2);
        let mut params = vec![0.0; shape.end()];
        params.iter_mut().for_each(|p| *p = rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..4 * 5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut cache = MlpCache::default();
        forward(&params, &shape, &x, 4, &mut cache);
        for b in 0..4 {
            let want = naive_forward(&params, &shape, &x[b * 5..b * 5 + 5]);
            for (g, w) in cache.output()[b * 3..b * 3 + 3].iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shape = MlpShape::new(vec![3, 4, 2], 0);
        let mut params: Vec<f64> = (0..shape.end()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..2 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..2 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |p: &[f64]| -> f64 {
            let mut c = MlpCache::default();
            forward(p, &shape, &x, 2, &mut c);
            c.output().iter().zip(&upstream).map(|(y, u)| y * u).sum()
        };
        let mut cache = MlpCache::default();
        forward(&params, &shape, &x, 2, &mut cache);
        let mut grad = vec![0.0; params.len()];
        backward(&params, &shape, &cache, &upstream, &mut grad);
        for j in 0..params.len() {
            let h = 1e-6;
            let orig = params[j];
            params[j] = orig + h;
            let up = loss(&params);
            params[j] = orig - h;
            let down = loss(&params);
            params[j] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-8, "param {j}: {fd} vs {}", grad[j]);
        }
    }

    #[test]
    fn orthogonal_rows_or_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(4, 9), (9, 4), (5, 5)] {
            let w = orthogonal(r, c, 2.0, &mut rng);
            let m = DMatrix::from_row_slice(r, c, &w) / 2.0;
            let gram = if r <= c { &m * m.transpose() } else { m.transpose() * &m };
            let n = r.min(c);
            assert!((gram - DMatrix::<f64>::identity(n, n)).norm() < 1e-10);
        }
    }

    #[test]
    fn grad_clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 5.0);
        assert_eq!(g, vec![3.0, 4.0]);
        clip_grad_norm(&mut g, 0.5);
        let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((n - 0.5).abs() < 1e-6);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0, -1.0];
        let mut adam = Adam::new(2, 0.1, 1e-12);
        adam.step(&mut p, &[2.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] + 0.9).abs() < 1e-9);
    }
}
