//! Single-head scaled dot-product self-attention over `T` tokens of width
//! `d`: `Q = X·Wq`, `K = X·Wk`, `V = X·Wv`, `out = softmax(Q·Kᵀ/√d)·V`.
//!
//! Parameters are `[Wq, Wk, Wv]`, each `d × d` row-major (input index
//! first). With [`Mixing::Identity`] the attention matrix is replaced by
//! the identity, so each token only sees its own value vector.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::softmax_in_place;
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mixing {
    #[default]
    Attention,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttention {
    tokens: usize,
    d: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AttentionCache {
    tokens: usize,
    d: usize,
    filled: bool,
    mixing: Mixing,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention weights, `T × T`.
    a: Vec<f64>,
    // Backward scratch.
    dq: Vec<f64>,
    dk: Vec<f64>,
    dv: Vec<f64>,
    da: Vec<f64>,
}

impl AttentionCache {
    pub fn new(att: &SelfAttention) -> Self {
        let (t, d) = (att.tokens, att.d);
        AttentionCache {
            tokens: t,
            d,
            filled: false,
            mixing: Mixing::Attention,
            x: vec![0.0; t * d],
            q: vec![0.0; t * d],
            k: vec![0.0; t * d],
            v: vec![0.0; t * d],
            a: vec![0.0; t * t],
            dq: vec![0.0; t * d],
            dk: vec![0.0; t * d],
            dv: vec![0.0; t * d],
            da: vec![0.0; t * t],
        }
    }

    /// Attention weights of the last forward pass, `T × T` row-major.
    pub fn weights(&self) -> &[f64] {
        &self.a
    }

    pub fn invalidate(&mut self) {
        self.filled = false;
    }
}

/// `out[t][j] = Σ_i x[t][i] · w[i][j]`.
fn project(x: &[f64], w: &[f64], d: usize, out: &mut [f64]) {
    for (xr, or) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        or.fill(0.0);
        for (i, &xi) in xr.iter().enumerate() {
            let wr = &w[i * d..(i + 1) * d];
            for j in 0..d {
                or[j] += xi * wr[j];
            }
        }
    }
}

/// Accumulates `dW += Xᵀ·dY` and `dX += dY·Wᵀ`.
fn project_backward(x: &[f64], w: &[f64], dy: &[f64], d: usize, dw: &mut [f64], dx: &mut [f64]) {
    for ((xr, dyr), dxr) in x.chunks_exact(d).zip(dy.chunks_exact(d)).zip(dx.chunks_exact_mut(d)) {
        for i in 0..d {
            let wr = &w[i * d..(i + 1) * d];
            let dwr = &mut dw[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for j in 0..d {
                dwr[j] += xr[i] * dyr[j];
                acc += dyr[j] * wr[j];
            }
            dxr[i] += acc;
        }
    }
}

impl SelfAttention {
    pub fn new(tokens: usize, d: usize) -> Result<Self> {
        if tokens == 0 || d == 0 {
            return Err(Error::Argument("attention dimensions must be positive".into()));
        }
        Ok(SelfAttention { tokens, d })
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn d_model(&self) -> usize {
        self.d
    }

    pub fn param_count(&self) -> usize {
        3 * self.d * self.d
    }

    /// Identity projections plus N(0, sigma²) noise.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], sigma: f64, rng: &mut R) {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let d = self.d;
        for w in params.chunks_exact_mut(d * d) {
            for (idx, v) in w.iter_mut().enumerate() {
                let eye = if idx / d == idx % d { 1.0 } else { 0.0 };
                *v = eye + normal.sample(rng);
            }
        }
    }

    pub fn forward(
        &self,
        params: &[f64],
        x: &[f64],
        out: &mut [f64],
        cache: &mut AttentionCache,
        mixing: Mixing,
    ) -> Result<()> {
        let (t, d) = (self.tokens, self.d);
        ensure_len(params, self.param_count(), "attention parameters")?;
        ensure_len(x, t * d, "attention input")?;
        ensure_len(out, t * d, "attention output")?;
        if cache.tokens != t || cache.d != d {
            *cache = AttentionCache::new(self);
        }
        let (wq, rest) = params.split_at(d * d);
        let (wk, wv) = rest.split_at(d * d);
        cache.x.copy_from_slice(x);
        project(x, wv, d, &mut cache.v);
        cache.mixing = mixing;
        match mixing {
            Mixing::Identity => {
                out.copy_from_slice(&cache.v);
                cache.a.fill(0.0);
                for i in 0..t {
                    cache.a[i * t + i] = 1.0;
                }
            }
            Mixing::Attention => {
                project(x, wq, d, &mut cache.q);
                project(x, wk, d, &mut cache.k);
                let scale = 1.0 / (d as f64).sqrt();
                for i in 0..t {
                    let qi = &cache.q[i * d..(i + 1) * d];
                    let row = &mut cache.a[i * t..(i + 1) * t];
                    for (j, s) in row.iter_mut().enumerate() {
                        let kj = &cache.k[j * d..(j + 1) * d];
                        *s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                    }
                    softmax_in_place(row);
                    let orow = &mut out[i * d..(i + 1) * d];
                    orow.fill(0.0);
                    for (j, &aij) in row.iter().enumerate() {
                        let vj = &cache.v[j * d..(j + 1) * d];
                        for c in 0..d {
                            orow[c] += aij * vj[c];
                        }
                    }
                }
            }
        }
        cache.filled = true;
        Ok(())
    }

    /// Writes `dL/dX` into `grad_in`, adds parameter gradients into
    /// `grad_params`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &mut AttentionCache,
        grad_out: &[f64],
        grad_in: &mut [f64],
        grad_params: &mut [f64],
    ) -> Result<()> {
        let (t, d) = (self.tokens, self.d);
        if !cache.filled || cache.tokens != t || cache.d != d {
            return Err(Error::State("attention backward without a matching forward".into()));
        }
        ensure_len(params, self.param_count(), "attention parameters")?;
        ensure_len(grad_params, self.param_count(), "attention parameter gradient")?;
        ensure_len(grad_out, t * d, "attention output gradient")?;
        ensure_len(grad_in, t * d, "attention input gradient")?;
        let (wq, rest) = params.split_at(d * d);
        let (wk, wv) = rest.split_at(d * d);
        let (gq, grest) = grad_params.split_at_mut(d * d);
        let (gk, gv) = grest.split_at_mut(d * d);
        grad_in.fill(0.0);
        let c = cache;

        if c.mixing == Mixing::Identity {
            project_backward(&c.x, wv, grad_out, d, gv, grad_in);
            return Ok(());
        }

        // dV = Aᵀ·dO, dA = dO·Vᵀ.
        c.dv.fill(0.0);
        for i in 0..t {
            let go = &grad_out[i * d..(i + 1) * d];
            for j in 0..t {
                let aij = c.a[i * t + j];
                let vj = &c.v[j * d..(j + 1) * d];
                let dvj = &mut c.dv[j * d..(j + 1) * d];
                let mut dot = 0.0;
                for k in 0..d {
                    dvj[k] += aij * go[k];
                    dot += go[k] * vj[k];
                }
                c.da[i * t + j] = dot;
            }
        }
        // Softmax backward into scores, then dQ = dS·K/√d, dK = dSᵀ·Q/√d.
        let scale = 1.0 / (d as f64).sqrt();
        c.dq.fill(0.0);
        c.dk.fill(0.0);
        for i in 0..t {
            let arow = &c.a[i * t..(i + 1) * t];
            let darow = &c.da[i * t..(i + 1) * t];
            let inner: f64 = arow.iter().zip(darow).map(|(a, g)| a * g).sum();
            let qi = &c.q[i * d..(i + 1) * d];
            for j in 0..t {
                let ds = arow[j] * (darow[j] - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = &c.k[j * d..(j + 1) * d];
                for k in 0..d {
                    c.dq[i * d + k] += ds * kj[k];
                    c.dk[j * d + k] += ds * qi[k];
                }
            }
        }
        project_backward(&c.x, wq, &c.dq, d, gq, grad_in);
        project_backward(&c.x, wk, &c.dk, d, gk, grad_in);
        project_backward(&c.x, wv, &c.dv, d, gv, grad_in);
        Ok(())
    }
}
