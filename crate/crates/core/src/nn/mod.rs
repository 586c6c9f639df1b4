//! Differentiable building blocks with hand-written gradients.
//!
//! Every layer works on flat `f64` parameter slices owned by the caller, so a
//! model can keep all of its weights in a single vector and hand sub-slices
//! to the layers. Forward passes fill a cache; backward passes read it and
//! *accumulate* into the supplied gradient slices.

pub mod adam;
pub mod attention;
pub mod dense;
pub mod gradcheck;
pub mod kan;
pub mod spline;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{AttentionCache, Mixing, SelfAttention};
pub use dense::Dense;
pub use gradcheck::{grad_check, numeric_gradient, relative_error};
pub use kan::{KanCache, KanInit, KanLayer};
pub use spline::{LocalBasis, SplineGrid};

use crate::error::{Error, Result};

pub fn silu(x: f64) -> f64 {
    x * logistic(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = logistic(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax of one row, shifted by the row maximum.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut out = row.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Sinusoidal encoding, row-major `num_tokens × d_model`:
/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(...)`.
pub fn positional_encoding(num_tokens: usize, d_model: usize) -> Result<Vec<f64>> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(Error::Argument(format!("d_model must be even and positive, got {d_model}")));
    }
    let mut pe = vec![0.0; num_tokens * d_model];
    for pos in 0..num_tokens {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            pe[pos * d_model + 2 * i] = angle.sin();
            pe[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Ok(pe)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!((silu(20.0) - 20.0).abs() < 1e-6);
        let fd = (silu(1e-5) - silu(-1e-5)) / 2e-5;
        assert!((fd - 0.5).abs() < 1e-9);
        assert_eq!(silu_grad(0.0), 0.5);
        for &x in &[-3.0, -0.4, 0.7, 2.5] {
            let fd = (silu(x + 1e-6) - silu(x - 1e-6)) / 2e-6;
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0);
        assert_eq!(logistic(800.0), 1.0);
        assert!((logistic(2.0) + logistic(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let s = softmax(&[1000.0, 1001.0, 999.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(softmax(&[3.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn positional_encoding_values() {
        let pe = positional_encoding(55, 16).unwrap();
        for i in 0..8 {
            assert_eq!(pe[2 * i], 0.0);
            assert_eq!(pe[2 * i + 1], 1.0);
        }
        assert!((pe[16] - 0.841_470_984_807_896_5).abs() < 1e-15);
        assert!(pe.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(matches!(positional_encoding(4, 15), Err(Error::Argument(_))));
    }
}
