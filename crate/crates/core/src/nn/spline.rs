//! B-spline bases on an open-uniform (clamped) knot vector.

use crate::error::{Error, Result};

/// Largest supported degree; local evaluation uses fixed-size buffers.
pub const MAX_DEGREE: usize = 7;
const MAX_ORDER: usize = MAX_DEGREE + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid {
    degree: usize,
    intervals: usize,
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

/// Nonzero basis values (and derivatives) at one point: entries
/// `start..start + order` of the full basis.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalBasis {
    pub start: usize,
    pub values: [f64; MAX_ORDER],
    pub derivs: [f64; MAX_ORDER],
}

impl SplineGrid {
    pub fn new(degree: usize, intervals: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(1..=MAX_DEGREE).contains(&degree) {
            return Err(Error::Argument(format!("spline degree {degree} not in 1..={MAX_DEGREE}")));
        }
        if intervals < 3 {
            return Err(Error::Argument(format!("spline grid needs >= 3 intervals, got {intervals}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Argument(format!("bad spline domain [{lo}, {hi}]")));
        }
        let h = (hi - lo) / intervals as f64;
        let mut knots = vec![lo; degree + 1];
        knots.extend((1..intervals).map(|k| lo + k as f64 * h));
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(SplineGrid {
            degree,
            intervals,
            lo,
            hi,
            knots,
        })
    }

    pub fn cubic(intervals: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(3, intervals, lo, hi)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, `intervals + degree`.
    pub fn basis_count(&self) -> usize {
        self.intervals + self.degree
    }

    pub fn order(&self) -> usize {
        self.degree + 1
    }

    /// Knot span index `i` with `knots[i] <= x < knots[i + 1]`; the right end
    /// of the domain belongs to the last span.
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.basis_count();
        if x >= self.hi {
            return n - 1;
        }
        if x <= self.lo {
            return p;
        }
        let h = (self.hi - self.lo) / self.intervals as f64;
        let mut i = p + (((x - self.lo) / h) as usize).min(self.intervals - 1);
        // Guard against rounding in the division.
        while i > p && x < self.knots[i] {
            i -= 1;
        }
        while i < n - 1 && x >= self.knots[i + 1] {
            i += 1;
        }
        i
    }

    /// Nonzero basis functions of degree `deg` on span `i` (triangular scheme).
    fn basis_funs(&self, i: usize, x: f64, deg: usize, out: &mut [f64; MAX_ORDER]) {
        let u = &self.knots;
        let mut left = [0.0; MAX_ORDER];
        let mut right = [0.0; MAX_ORDER];
        out[0] = 1.0;
        for j in 1..=deg {
            left[j] = x - u[i + 1 - j];
            right[j] = u[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Local basis at `x`. Outside the domain `x` is clamped to the nearest
    /// end, so the values freeze and the derivatives are zero.
    pub fn local(&self, x: f64) -> LocalBasis {
        let p = self.degree;
        let outside = !(self.lo..=self.hi).contains(&x);
        let xc = x.clamp(self.lo, self.hi);
        let i = self.span(xc);
        let mut lb = LocalBasis {
            start: i - p,
            ..Default::default()
        };
        self.basis_funs(i, xc, p, &mut lb.values);
        if outside {
            return lb;
        }
        let mut lower = [0.0; MAX_ORDER];
        self.basis_funs(i, xc, p - 1, &mut lower);
        // lower[k] is N_{i-p+1+k, p-1}; N'_{a,p} = p (N_{a,p-1}/(u[a+p]-u[a]) - N_{a+1,p-1}/(u[a+p+1]-u[a+1])).
        let u = &self.knots;
        let pf = p as f64;
        for k in 0..=p {
            let a = i - p + k;
            let first = if k >= 1 {
                let den = u[a + p] - u[a];
                if den > 0.0 { lower[k - 1] / den } else { 0.0 }
            } else {
                0.0
            };
            let second = if k < p {
                let den = u[a + p + 1] - u[a + 1];
                if den > 0.0 { lower[k] / den } else { 0.0 }
            } else {
                0.0
            };
            lb.derivs[k] = pf * (first - second);
        }
        lb
    }

    /// Full basis vector of length [`basis_count`](Self::basis_count).
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let lb = self.local(x);
        let mut out = vec![0.0; self.basis_count()];
        out[lb.start..lb.start + self.order()].copy_from_slice(&lb.values[..self.order()]);
        out
    }

    /// Spline value `Σ c_i B_i(x)`.
    pub fn eval(&self, coefs: &[f64], x: f64) -> f64 {
        let lb = self.local(x);
        (0..self.order()).map(|k| coefs[lb.start + k] * lb.values[k]).sum()
    }
}

impl Default for SplineGrid {
    /// Cubic, 5 intervals on [-1.5, 1.5].
    fn default() -> Self {
        SplineGrid::cubic(5, -1.5, 1.5).expect("valid default grid")
    }
}
