//! Kolmogorov-Arnold layer: every (output q, input p) edge carries its own
//! univariate function `φ(x) = w_b·silu(x) + w_s·Σ c_i B_i(x)` and outputs
//! sum their incoming edges.
//!
//! Parameter layout: edges in `(q, p)` row-major order, each edge a block
//! `[w_b, w_s, c_0 .. c_{K-1}]` with `K = grid.basis_count()`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::spline::{LocalBasis, SplineGrid};
use super::{silu, silu_grad};
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer {
    in_dim: usize,
    out_dim: usize,
    grid: SplineGrid,
}

/// Initialization scales for a KAN layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KanInit {
    /// `w_b` is drawn from U(-a, a) with `a = base_gain * sqrt(3 / in_dim)`.
    pub base_gain: f64,
    pub spline_weight: f64,
    pub coef_sigma: f64,
}

impl Default for KanInit {
    fn default() -> Self {
        KanInit {
            base_gain: 1.0,
            spline_weight: 0.1,
            coef_sigma: 0.1,
        }
    }
}

/// Per-input quantities saved by the forward pass.
#[derive(Debug, Clone, Default)]
pub struct KanCache {
    in_dim: usize,
    out_dim: usize,
    filled: bool,
    x: Vec<f64>,
    silu: Vec<f64>,
    dsilu: Vec<f64>,
    basis: Vec<LocalBasis>,
}

impl KanCache {
    pub fn new(layer: &KanLayer) -> Self {
        KanCache {
            in_dim: layer.in_dim,
            out_dim: layer.out_dim,
            filled: false,
            x: vec![0.0; layer.in_dim],
            silu: vec![0.0; layer.in_dim],
            dsilu: vec![0.0; layer.in_dim],
            basis: vec![LocalBasis::default(); layer.in_dim],
        }
    }

    pub fn invalidate(&mut self) {
        self.filled = false;
    }
}

impl KanLayer {
    pub fn new(in_dim: usize, out_dim: usize, grid: SplineGrid) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Argument("KAN layer dimensions must be positive".into()));
        }
        Ok(KanLayer { in_dim, out_dim, grid })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.grid
    }

    pub fn edge_len(&self) -> usize {
        2 + self.grid.basis_count()
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim * self.edge_len()
    }

    /// Parameters of edge `(q, p)`.
    pub fn edge<'a>(&self, params: &'a [f64], q: usize, p: usize) -> &'a [f64] {
        let e = self.edge_len();
        let at = (q * self.in_dim + p) * e;
        &params[at..at + e]
    }

    /// Evaluates a single edge function, independent of any cache.
    pub fn edge_value(&self, params: &[f64], q: usize, p: usize, x: f64) -> f64 {
        let e = self.edge(params, q, p);
        e[0] * silu(x) + e[1] * self.grid.eval(&e[2..], x)
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], init: &KanInit, rng: &mut R) {
        let a = init.base_gain * (3.0 / self.in_dim as f64).sqrt();
        let normal = Normal::new(0.0, init.coef_sigma).expect("finite sigma");
        for edge in params.chunks_exact_mut(self.edge_len()) {
            edge[0] = if a > 0.0 { rng.random_range(-a..a) } else { 0.0 };
            edge[1] = init.spline_weight;
            for c in &mut edge[2..] {
                *c = normal.sample(rng);
            }
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64], cache: &mut KanCache) -> Result<()> {
        ensure_len(params, self.param_count(), "KAN parameters")?;
        ensure_len(x, self.in_dim, "KAN input")?;
        ensure_len(out, self.out_dim, "KAN output")?;
        if cache.in_dim != self.in_dim || cache.out_dim != self.out_dim {
            *cache = KanCache::new(self);
        }
        for (p, &xp) in x.iter().enumerate() {
            cache.x[p] = xp;
            cache.silu[p] = silu(xp);
            cache.dsilu[p] = silu_grad(xp);
            cache.basis[p] = self.grid.local(xp);
        }
        let order = self.grid.order();
        let e = self.edge_len();
        for (q, o) in out.iter_mut().enumerate() {
            let row = &params[q * self.in_dim * e..(q + 1) * self.in_dim * e];
            let mut acc = 0.0;
            for (p, edge) in row.chunks_exact(e).enumerate() {
                let lb = &cache.basis[p];
                let c = &edge[2 + lb.start..2 + lb.start + order];
                let mut s = 0.0;
                for k in 0..order {
                    s += c[k] * lb.values[k];
                }
                acc += edge[0] * cache.silu[p] + edge[1] * s;
            }
            *o = acc;
        }
        cache.filled = true;
        Ok(())
    }

    /// Writes `dL/dx` into `grad_in` and adds parameter gradients into
    /// `grad_params`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &KanCache,
        grad_out: &[f64],
        grad_in: &mut [f64],
        grad_params: &mut [f64],
    ) -> Result<()> {
        if !cache.filled || cache.in_dim != self.in_dim || cache.out_dim != self.out_dim {
            return Err(Error::State("KAN backward without a matching forward".into()));
        }
        ensure_len(params, self.param_count(), "KAN parameters")?;
        ensure_len(grad_params, self.param_count(), "KAN parameter gradient")?;
        ensure_len(grad_out, self.out_dim, "KAN output gradient")?;
        ensure_len(grad_in, self.in_dim, "KAN input gradient")?;
        grad_in.fill(0.0);
        let order = self.grid.order();
        let e = self.edge_len();
        for (q, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let base = q * self.in_dim * e;
            let row = &params[base..base + self.in_dim * e];
            let grow = &mut grad_params[base..base + self.in_dim * e];
            for (p, (edge, gedge)) in row.chunks_exact(e).zip(grow.chunks_exact_mut(e)).enumerate() {
                let lb = &cache.basis[p];
                let (wb, ws) = (edge[0], edge[1]);
                let c = &edge[2 + lb.start..2 + lb.start + order];
                let mut s = 0.0;
                let mut ds = 0.0;
                for k in 0..order {
                    s += c[k] * lb.values[k];
                    ds += c[k] * lb.derivs[k];
                }
                gedge[0] += g * cache.silu[p];
                gedge[1] += g * s;
                let gc = &mut gedge[2 + lb.start..2 + lb.start + order];
                for k in 0..order {
                    gc[k] += g * ws * lb.values[k];
                }
                grad_in[p] += g * (wb * cache.dsilu[p] + ws * ds);
            }
        }
        Ok(())
    }
}
