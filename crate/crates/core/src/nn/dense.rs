//! Fully connected layer `y = W·x + b`, parameters `[W (out × in), b]`.

use rand::Rng;

use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Argument("dense layer dimensions must be positive".into()));
        }
        Ok(Dense { in_dim, out_dim })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    /// Uniform He-style init `U(-a, a)`, `a = sqrt(6 / in_dim)`; zero bias.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let a = (6.0 / self.in_dim as f64).sqrt();
        let (w, b) = params.split_at_mut(self.out_dim * self.in_dim);
        for v in w {
            *v = rng.random_range(-a..a);
        }
        b.fill(0.0);
    }

    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        ensure_len(params, self.param_count(), "dense parameters")?;
        ensure_len(x, self.in_dim, "dense input")?;
        ensure_len(out, self.out_dim, "dense output")?;
        let (w, b) = params.split_at(self.out_dim * self.in_dim);
        for (o, (row, bo)) in out.iter_mut().zip(w.chunks_exact(self.in_dim).zip(b)) {
            *o = bo + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(())
    }

    /// Writes `dL/dx` into `grad_in`, adds parameter gradients into
    /// `grad_params`. `x` is the input of the matching forward pass.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        grad_out: &[f64],
        grad_in: &mut [f64],
        grad_params: &mut [f64],
    ) -> Result<()> {
        ensure_len(params, self.param_count(), "dense parameters")?;
        ensure_len(grad_params, self.param_count(), "dense parameter gradient")?;
        ensure_len(x, self.in_dim, "dense input")?;
        ensure_len(grad_out, self.out_dim, "dense output gradient")?;
        ensure_len(grad_in, self.in_dim, "dense input gradient")?;
        let n = self.out_dim * self.in_dim;
        let (w, _) = params.split_at(n);
        let (gw, gb) = grad_params.split_at_mut(n);
        grad_in.fill(0.0);
        for (q, &g) in grad_out.iter().enumerate() {
            gb[q] += g;
            let row = &w[q * self.in_dim..(q + 1) * self.in_dim];
            let grow = &mut gw[q * self.in_dim..(q + 1) * self.in_dim];
            for p in 0..self.in_dim {
                grow[p] += g * x[p];
                grad_in[p] += g * row[p];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward_by_hand() {
        let l = Dense::new(2, 1).unwrap();
        let p = [2.0, -1.0, 0.5];
        let mut y = [0.0];
        l.forward(&p, &[3.0, 4.0], &mut y).unwrap();
        assert_eq!(y[0], 2.5);
        let mut gi = [0.0; 2];
        let mut gp = [0.0; 3];
        l.backward(&p, &[3.0, 4.0], &[2.0], &mut gi, &mut gp).unwrap();
        assert_eq!(gi, [4.0, -2.0]);
        assert_eq!(gp, [6.0, 8.0, 2.0]);
    }

    #[test]
    fn dimension_errors() {
        let l = Dense::new(2, 1).unwrap();
        assert!(l.forward(&[0.0; 3], &[0.0; 3], &mut [0.0]).is_err());
    }
}
