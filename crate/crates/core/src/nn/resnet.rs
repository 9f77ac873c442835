use serde::{Deserialize, Serialize};

use super::fan_in_uniform;
use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

/// Residual transport map `T(x; y)`.
///
/// `u_0 = A_in [x; y] + a_in`, then for each block
/// `u <- u + L2(relu(L1(u)))` with `L1`, `L2` affine `width -> width`, and finally
/// `T = A_out u + a_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportNetParams {
    n: usize,
    m: usize,
    width: usize,
    blocks: usize,
    data: Vec<f64>,
}

/// Activations of one forward pass, reused by the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ResNetCache {
    input: Vec<f64>,
    // u before each block plus the final u: (blocks + 1) * width
    us: Vec<f64>,
    // block pre-activations: blocks * width
    hs: Vec<f64>,
    out: Vec<f64>,
    scratch: Vec<f64>,
}

impl ResNetCache {
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

#[inline]
fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        out[r] += acc;
    }
}

#[inline]
fn matvec_t_add(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * gr;
        }
    }
}

#[inline]
fn outer_add(grad: &mut [f64], rows: usize, cols: usize, g: &[f64], x: &[f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (o, xv) in row.iter_mut().zip(x) {
            *o += gr * xv;
        }
    }
}

impl TransportNetParams {
    pub fn zeros(n: usize, m: usize, width: usize, blocks: usize) -> Self {
        assert!(n >= 1 && width >= 1, "transport net needs n >= 1 and width >= 1");
        Self {
            n,
            m,
            width,
            blocks,
            data: vec![0.0; Self::param_count(n, m, width, blocks)],
        }
    }

    /// Every weight and bias uniform in `+-1/sqrt(fan_in)` of its layer.
    pub fn init(n: usize, m: usize, width: usize, blocks: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(n, m, width, blocks);
        let d = n + m;
        let (w0, b0) = (p.in_w_range(), p.in_b_range());
        for v in &mut p.data[w0.0..w0.1] {
            *v = fan_in_uniform(rng, d);
        }
        for v in &mut p.data[b0.0..b0.1] {
            *v = fan_in_uniform(rng, d);
        }
        let block_start = b0.1;
        let out_start = p.out_w_offset();
        for v in &mut p.data[block_start..out_start] {
            *v = fan_in_uniform(rng, width);
        }
        let end = p.data.len();
        for v in &mut p.data[out_start..end] {
            *v = fan_in_uniform(rng, width);
        }
        p
    }

    /// Exact affine map `T(x; y) = A [x; y] + c` with `A` given row-major as
    /// `n x (n+m)`. The input layer copies `(x, y)` into the first `n+m` hidden units
    /// and the blocks are zero, so the skip connections carry it through.
    pub fn from_affine(n: usize, m: usize, width: usize, blocks: usize, a: &[f64], c: &[f64]) -> Result<Self> {
        let d = n + m;
        if width < d {
            return Err(Error::Invalid(format!("width {width} cannot carry an affine map of {d} inputs")));
        }
        check_len("affine matrix", n * d, a.len())?;
        check_len("affine offset", n, c.len())?;
        let mut p = Self::zeros(n, m, width, blocks);
        for i in 0..d {
            p.data[i * d + i] = 1.0;
        }
        let ow = p.out_w_offset();
        for r in 0..n {
            p.data[ow + r * width..ow + r * width + d].copy_from_slice(&a[r * d..(r + 1) * d]);
        }
        let ob = ow + n * width;
        p.data[ob..ob + n].copy_from_slice(c);
        Ok(p)
    }

    pub fn from_flat(n: usize, m: usize, width: usize, blocks: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || width == 0 {
            return Err(Error::Invalid("transport net needs n >= 1 and width >= 1".into()));
        }
        check_len(
            "transport net parameter vector",
            Self::param_count(n, m, width, blocks),
            data.len(),
        )?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transport net parameters"));
        }
        Ok(Self {
            n,
            m,
            width,
            blocks,
            data,
        })
    }

    pub fn param_count(n: usize, m: usize, width: usize, blocks: usize) -> usize {
        width * (n + m + 1) + blocks * 2 * (width * width + width) + n * width + n
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn obs_dim(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    fn in_w_range(&self) -> (usize, usize) {
        (0, self.width * (self.n + self.m))
    }

    fn in_b_range(&self) -> (usize, usize) {
        let s = self.width * (self.n + self.m);
        (s, s + self.width)
    }

    /// Offsets of (L1 weights, L1 bias, L2 weights, L2 bias) of block `j`.
    fn block_offsets(&self, j: usize) -> [usize; 4] {
        let w = self.width;
        let base = w * (self.n + self.m + 1) + j * 2 * (w * w + w);
        [base, base + w * w, base + w * w + w, base + 2 * w * w + w]
    }

    fn out_w_offset(&self) -> usize {
        let w = self.width;
        w * (self.n + self.m + 1) + self.blocks * 2 * (w * w + w)
    }

    /// Named layer views: `(weights, rows, cols, bias)` in network order.
    pub fn layers(&self) -> Vec<(&[f64], usize, usize, &[f64])> {
        let (w, d) = (self.width, self.n + self.m);
        let mut out = Vec::with_capacity(2 + 2 * self.blocks);
        let (a, b) = (self.in_w_range(), self.in_b_range());
        out.push((&self.data[a.0..a.1], w, d, &self.data[b.0..b.1]));
        for j in 0..self.blocks {
            let [w1, b1, w2, b2] = self.block_offsets(j);
            out.push((&self.data[w1..b1], w, w, &self.data[b1..w2]));
            out.push((&self.data[w2..b2], w, w, &self.data[b2..b2 + w]));
        }
        let ow = self.out_w_offset();
        out.push((&self.data[ow..ow + self.n * w], self.n, w, &self.data[ow + self.n * w..]));
        out
    }

    fn check_inputs(&self, x: &[f64], y: &[f64]) -> Result<()> {
        check_len("transport net state input", self.n, x.len())?;
        check_len("transport net observation input", self.m, y.len())
    }

    /// Forward pass storing activations in `cache`; returns the output slice.
    pub(crate) fn forward<'c>(&self, x: &[f64], y: &[f64], cache: &'c mut ResNetCache) -> &'c [f64] {
        let (n, m, w) = (self.n, self.m, self.width);
        cache.input.clear();
        cache.input.extend_from_slice(x);
        cache.input.extend_from_slice(y);
        cache.us.resize((self.blocks + 1) * w, 0.0);
        cache.hs.resize(self.blocks * w, 0.0);
        cache.out.resize(n, 0.0);
        cache.scratch.resize(w, 0.0);

        let (iw, ib) = (self.in_w_range(), self.in_b_range());
        {
            let u0 = &mut cache.us[..w];
            u0.copy_from_slice(&self.data[ib.0..ib.1]);
            matvec_add(&self.data[iw.0..iw.1], w, n + m, &cache.input, u0);
        }
        for j in 0..self.blocks {
            let [w1, b1, w2, b2] = self.block_offsets(j);
            let (prev, next) = cache.us.split_at_mut((j + 1) * w);
            let u = &prev[j * w..];
            let h = &mut cache.hs[j * w..(j + 1) * w];
            h.copy_from_slice(&self.data[b1..w2]);
            matvec_add(&self.data[w1..b1], w, w, u, h);
            let a = &mut cache.scratch;
            for (av, hv) in a.iter_mut().zip(h.iter()) {
                *av = hv.max(0.0);
            }
            let un = &mut next[..w];
            for ((o, uv), bv) in un.iter_mut().zip(u).zip(&self.data[b2..b2 + w]) {
                *o = uv + bv;
            }
            matvec_add(&self.data[w2..b2], w, w, a, un);
        }
        let ow = self.out_w_offset();
        cache.out.copy_from_slice(&self.data[ow + n * w..]);
        let ul = &cache.us[self.blocks * w..];
        matvec_add(&self.data[ow..ow + n * w], n, w, ul, &mut cache.out);
        &cache.out
    }

    /// Adds the gradient of `upstream . T` (for the pass recorded in `cache`) into `grad`.
    pub(crate) fn backward_accumulate(&self, cache: &ResNetCache, upstream: &[f64], grad: &mut [f64]) {
        let (n, m, w) = (self.n, self.m, self.width);
        let ow = self.out_w_offset();
        let ul = &cache.us[self.blocks * w..];
        outer_add(&mut grad[ow..ow + n * w], n, w, upstream, ul);
        for (g, u) in grad[ow + n * w..].iter_mut().zip(upstream) {
            *g += u;
        }
        let mut gu = vec![0.0; w];
        matvec_t_add(&self.data[ow..ow + n * w], n, w, upstream, &mut gu);

        let mut ga = vec![0.0; w];
        let mut act = vec![0.0; w];
        for j in (0..self.blocks).rev() {
            let [w1, b1, w2, b2] = self.block_offsets(j);
            let h = &cache.hs[j * w..(j + 1) * w];
            let u = &cache.us[j * w..(j + 1) * w];
            for (a, hv) in act.iter_mut().zip(h) {
                *a = hv.max(0.0);
            }
            outer_add(&mut grad[w2..b2], w, w, &gu, &act);
            for (g, v) in grad[b2..b2 + w].iter_mut().zip(&gu) {
                *g += v;
            }
            ga.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_add(&self.data[w2..b2], w, w, &gu, &mut ga);
            for (g, hv) in ga.iter_mut().zip(h) {
                if *hv <= 0.0 {
                    *g = 0.0;
                }
            }
            outer_add(&mut grad[w1..b1], w, w, &ga, u);
            for (g, v) in grad[b1..w2].iter_mut().zip(&ga) {
                *g += v;
            }
            // skip connection keeps gu; add the path through L1
            matvec_t_add(&self.data[w1..b1], w, w, &ga, &mut gu);
        }
        let (iw, ib) = (self.in_w_range(), self.in_b_range());
        outer_add(&mut grad[iw.0..iw.1], w, n + m, &gu, &cache.input);
        for (g, v) in grad[ib.0..ib.1].iter_mut().zip(&gu) {
            *g += v;
        }
    }
}

pub fn resnet_eval(p: &TransportNetParams, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    p.check_inputs(x, y)?;
    let mut cache = ResNetCache::default();
    Ok(p.forward(x, y, &mut cache).to_vec())
}

/// Gradient of `upstream . T(x; y)` with respect to every parameter.
pub fn resnet_backward(p: &TransportNetParams, x: &[f64], y: &[f64], upstream: &[f64]) -> Result<TransportNetParams> {
    p.check_inputs(x, y)?;
    check_len("transport net upstream gradient", p.n, upstream.len())?;
    let mut cache = ResNetCache::default();
    p.forward(x, y, &mut cache);
    let mut g = TransportNetParams::zeros(p.n, p.m, p.width, p.blocks);
    p.backward_accumulate(&cache, upstream, &mut g.data);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn frobenius(w: &[f64]) -> f64 {
        w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn zero_params_zero_output() {
        let p = TransportNetParams::zeros(2, 2, 8, 2);
        assert_eq!(resnet_eval(&p, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_blocks_reduce_to_input_then_output_layer() {
        let mut rng = rng_from_seed(5);
        let mut p = TransportNetParams::init(2, 1, 6, 2, &mut rng);
        let [start, ..] = p.block_offsets(0);
        let end = p.out_w_offset();
        p.data[start..end].iter_mut().for_each(|v| *v = 0.0);

        let (x, y) = ([0.4, -1.3], [2.2]);
        let layers = p.layers();
        let (wi, ri, ci, bi) = layers[0];
        let input = [x[0], x[1], y[0]];
        let hidden: Vec<f64> = (0..ri)
            .map(|r| bi[r] + (0..ci).map(|c| wi[r * ci + c] * input[c]).sum::<f64>())
            .collect();
        let (wo, ro, co, bo) = *layers.last().unwrap();
        let expected: Vec<f64> = (0..ro)
            .map(|r| bo[r] + (0..co).map(|c| wo[r * co + c] * hidden[c]).sum::<f64>())
            .collect();
        let got = resnet_eval(&p, &x, &y).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_construction_is_exact() {
        let a = [0.3, -0.2, 0.9];
        let p = TransportNetParams::from_affine(1, 2, 4, 2, &a, &[0.5]).unwrap();
        let t = resnet_eval(&p, &[2.0], &[1.0, -1.0]).unwrap();
        assert!((t[0] - (0.6 - 0.2 - 0.9 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn output_is_lipschitz_bounded_by_layer_norms() {
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let p = TransportNetParams::init(2, 2, 16, 2, &mut rng);
            let layers = p.layers();
            let mut bound = frobenius(layers[0].0) * frobenius(layers.last().unwrap().0);
            for j in 0..p.blocks() {
                bound *= 1.0 + frobenius(layers[1 + 2 * j].0) * frobenius(layers[2 + 2 * j].0);
            }
            for _ in 0..50 {
                let v: Vec<f64> = (0..8).map(|_| rng.random_range(-4.0..4.0)).collect();
                let t1 = resnet_eval(&p, &v[0..2], &v[2..4]).unwrap();
                let t2 = resnet_eval(&p, &v[4..6], &v[6..8]).unwrap();
                assert!(t1.iter().chain(&t2).all(|z| z.is_finite()));
                let dout = t1.iter().zip(&t2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let din = (0..4).map(|i| (v[i] - v[i + 4]).powi(2)).sum::<f64>().sqrt();
                assert!(dout <= bound * din + 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let mut rng = rng_from_seed(9);
        let p = TransportNetParams::init(2, 2, 8, 2, &mut rng);
        let g = resnet_backward(&p, &[0.1, 0.2], &[0.3, 0.4], &[0.0, 0.0]).unwrap();
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_layer_gradient_is_outer_product() {
        // With zero blocks and an identity input layer, dT/dA_out = upstream x [x; y].
        let p = TransportNetParams::from_affine(1, 1, 2, 1, &[0.0, 0.0], &[0.0]).unwrap();
        let g = resnet_backward(&p, &[3.0], &[-2.0], &[0.5]).unwrap();
        let ow = p.out_w_offset();
        assert_eq!(&g.as_slice()[ow..ow + 2], &[1.5, -1.0]);
        assert_eq!(g.as_slice()[ow + 2], 0.5);
    }

    #[test]
    fn backward_matches_central_differences() {
        let h = 1e-5;
        for seed in 0..5 {
            let mut rng = rng_from_seed(300 + seed);
            let p = TransportNetParams::init(2, 2, 8, 2, &mut rng);
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let up = [0.8, -1.1];
            let g = resnet_backward(&p, &x, &y, &up).unwrap();
            let dot = |q: &TransportNetParams| -> f64 {
                let t = resnet_eval(q, &x, &y).unwrap();
                t[0] * up[0] + t[1] * up[1]
            };
            for j in 0..p.as_slice().len() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp.as_mut_slice()[j] += h;
                pm.as_mut_slice()[j] -= h;
                let fd = (dot(&pp) - dot(&pm)) / (2.0 * h);
                assert!(rel_err(g.as_slice()[j], fd) <= 1e-6, "seed {seed} param {j}: {} vs {fd}", g.as_slice()[j]);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = TransportNetParams::zeros(2, 1, 4, 2);
        assert!(resnet_eval(&p, &[1.0], &[1.0]).is_err());
        assert!(resnet_backward(&p, &[1.0, 2.0], &[1.0], &[1.0]).is_err());
        assert!(TransportNetParams::from_flat(2, 1, 4, 2, vec![0.0; 3]).is_err());
        assert!(TransportNetParams::from_affine(2, 2, 3, 1, &[0.0; 8], &[0.0; 2]).is_err());
    }
}
