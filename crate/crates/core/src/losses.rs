//! Training losses over batches of servo frames, stored flat: a batch of
//! `B` frames is a slice of `25·B` values.
//!
//! * MSE: mean over the batch of `Σ (p − t)² / 25`.
//! * Consistency: mean over the batch of the mean `|left − right|` over the
//!   eye pairs plus the mean over the brow pairs.
//! * Total: `mse + λ · consistency`.
//!
//! At `left == right` the absolute value uses subgradient 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::servo_space::{make_default_layout, Region, ServoLayout, SymPair, SERVO_DIM};

pub const DEFAULT_LAMBDA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub eye_pairs: Vec<SymPair>,
    pub brow_pairs: Vec<SymPair>,
}

impl LossConfig {
    /// Eye pairs are the symmetric eye and eyelid channels; brow pairs the
    /// symmetric brow channels.
    pub fn from_layout(layout: &ServoLayout, lambda: f64) -> Result<Self> {
        let cfg = LossConfig {
            lambda,
            eye_pairs: layout.pairs_in(&[Region::Eye, Region::Eyelid]),
            brow_pairs: layout.pairs_in(&[Region::Brow]),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_lambda(lambda: f64) -> Result<Self> {
        Self::from_layout(&make_default_layout(), lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Argument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        for p in self.eye_pairs.iter().chain(&self.brow_pairs) {
            if p.left >= SERVO_DIM || p.right >= SERVO_DIM || p.left == p.right {
                return Err(Error::Argument(format!("invalid consistency pair {p:?}")));
            }
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::with_lambda(DEFAULT_LAMBDA).expect("default layout pairs are valid")
    }
}

fn batch_size(pred: &[f64], target: Option<&[f64]>) -> Result<usize> {
    if pred.is_empty() || pred.len() % SERVO_DIM != 0 {
        return Err(Error::Dimension(format!(
            "prediction length {} is not a positive multiple of {SERVO_DIM}",
            pred.len()
        )));
    }
    if let Some(t) = target {
        if t.len() != pred.len() {
            return Err(Error::dim(pred.len(), t.len(), "target batch"));
        }
    }
    Ok(pred.len() / SERVO_DIM)
}

/// One-sample MSE; adds `scale · dL/dpred` into `grad`.
pub fn mse_sample(pred: &[f64], target: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
    let mut loss = 0.0;
    for i in 0..SERVO_DIM {
        let d = pred[i] - target[i];
        loss += d * d;
        grad[i] += scale * 2.0 * d / SERVO_DIM as f64;
    }
    loss / SERVO_DIM as f64
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn group_term(pred: &[f64], pairs: &[SymPair], scale: f64, grad: &mut [f64]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mut sum = 0.0;
    for p in pairs {
        let d = pred[p.left] - pred[p.right];
        sum += d.abs();
        let g = scale * sign(d) / n;
        grad[p.left] += g;
        grad[p.right] -= g;
    }
    sum / n
}

/// One-sample consistency loss; adds `scale · dL/dpred` into `grad`.
pub fn consistency_sample(pred: &[f64], cfg: &LossConfig, scale: f64, grad: &mut [f64]) -> f64 {
    group_term(pred, &cfg.eye_pairs, scale, grad) + group_term(pred, &cfg.brow_pairs, scale, grad)
}

/// One-sample total loss `mse + λ·consistency`; adds `scale · dL/dpred`.
pub fn total_sample(pred: &[f64], target: &[f64], cfg: &LossConfig, scale: f64, grad: &mut [f64]) -> f64 {
    let mse = mse_sample(pred, target, scale, grad);
    if cfg.lambda == 0.0 {
        return mse;
    }
    mse + cfg.lambda * consistency_sample(pred, cfg, scale * cfg.lambda, grad)
}

/// Batch MSE and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let b = batch_size(pred, Some(target))?;
    let mut grad = vec![0.0; pred.len()];
    let scale = 1.0 / b as f64;
    let mut loss = 0.0;
    for ((p, t), g) in pred
        .chunks_exact(SERVO_DIM)
        .zip(target.chunks_exact(SERVO_DIM))
        .zip(grad.chunks_exact_mut(SERVO_DIM))
    {
        loss += mse_sample(p, t, scale, g);
    }
    Ok((loss * scale, grad))
}

pub fn consistency_loss(pred: &[f64], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let b = batch_size(pred, None)?;
    let mut grad = vec![0.0; pred.len()];
    let scale = 1.0 / b as f64;
    let mut loss = 0.0;
    for (p, g) in pred.chunks_exact(SERVO_DIM).zip(grad.chunks_exact_mut(SERVO_DIM)) {
        loss += consistency_sample(p, cfg, scale, g);
    }
    Ok((loss * scale, grad))
}

pub fn total_loss(pred: &[f64], target: &[f64], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let (mse, mut grad) = mse_loss(pred, target)?;
    if cfg.lambda == 0.0 {
        return Ok((mse, grad));
    }
    let (con, cgrad) = consistency_loss(pred, cfg)?;
    for (g, c) in grad.iter_mut().zip(cgrad) {
        *g += cfg.lambda * c;
    }
    Ok((mse + cfg.lambda * con, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use proptest::prelude::*;

    #[test]
    fn mse_arithmetic() {
        let t = vec![0.5; 25];
        assert_eq!(mse_loss(&t, &t).unwrap().0, 0.0);
        let mut p = t.clone();
        p[3] += 0.1;
        assert!((mse_loss(&p, &t).unwrap().0 - 4e-4).abs() < 1e-15);
        assert!(matches!(mse_loss(&p, &t[..24]), Err(Error::Dimension(_))));
    }

    #[test]
    fn consistency_arithmetic() {
        let cfg = LossConfig {
            lambda: 0.01,
            eye_pairs: vec![SymPair { left: 0, right: 1 }],
            brow_pairs: vec![SymPair { left: 8, right: 9 }],
        };
        let mut p = vec![0.4; 25];
        assert_eq!(consistency_loss(&p, &cfg).unwrap().0, 0.0);
        p[0] = 0.3;
        p[1] = 0.5;
        assert!((consistency_loss(&p, &cfg).unwrap().0 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn default_pairs() {
        let cfg = LossConfig::default();
        assert_eq!(cfg.eye_pairs.len(), 4);
        assert_eq!(cfg.brow_pairs.len(), 2);
        assert_eq!(cfg.lambda, 0.01);
        assert!(LossConfig::with_lambda(-1.0).is_err());
    }

    #[test]
    fn kink_subgradient_is_zero() {
        let p = vec![0.5; 25];
        let (_, g) = consistency_loss(&p, &LossConfig::default()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lambda_zero_equals_mse() {
        let p: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let t: Vec<f64> = (0..50).map(|i| (i as f64 * 0.11).cos().abs()).collect();
        let cfg = LossConfig::with_lambda(0.0).unwrap();
        assert_eq!(total_loss(&p, &t, &cfg).unwrap(), mse_loss(&p, &t).unwrap());
    }

    proptest! {
        #[test]
        fn gradients_match_differences(
            p in prop::collection::vec(0.0f64..1.0, 50),
            t in prop::collection::vec(0.0f64..1.0, 50),
        ) {
            let cfg = LossConfig::default();
            let (_, g) = mse_loss(&p, &t).unwrap();
            prop_assert!(grad_check(|x| mse_loss(x, &t).unwrap().0, &p, &g, 1e-5) < 1e-6);
            // Keep away from the |·| kinks.
            let near_kink = cfg.eye_pairs.iter().chain(&cfg.brow_pairs).any(|pr| {
                (0..2).any(|b| (p[b * 25 + pr.left] - p[b * 25 + pr.right]).abs() < 1e-3)
            });
            if !near_kink {
                let (_, g) = total_loss(&p, &t, &cfg).unwrap();
                prop_assert!(grad_check(|x| total_loss(x, &t, &cfg).unwrap().0, &p, &g, 1e-5) < 1e-4);
            }
        }

        #[test]
        fn affine_in_lambda(l1 in 0.0f64..1.0, l2 in 0.0f64..1.0, p in prop::collection::vec(0.0f64..1.0, 25)) {
            let t = vec![0.2; 25];
            let f = |l: f64| total_loss(&p, &t, &LossConfig::with_lambda(l).unwrap()).unwrap().0;
            prop_assert!((f(l1) + f(l2) - 2.0 * f((l1 + l2) / 2.0)).abs() < 1e-12);
            prop_assert!(f(l1) >= 0.0);
        }
    }
}
