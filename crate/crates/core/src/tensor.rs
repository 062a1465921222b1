//! Dense cubic rank-3 tensors, used for third differentials.

use nalgebra::{DMatrix, DVector};
use std::ops::{AddAssign, Index, IndexMut};

/// A `d × d × d` array stored in row-major order (`(i, j, k)` at `(i * d + j) * d + k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    t[(i, j, k)] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dim + j) * self.dim + k
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.scale(s);
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute difference between entries related by a slot permutation.
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let v = self[(i, j, k)];
                    for w in [
                        self[(i, k, j)],
                        self[(j, i, k)],
                        self[(j, k, i)],
                        self[(k, i, j)],
                        self[(k, j, i)],
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }

    /// Average over all six slot permutations.
    pub fn symmetrized(&self) -> Self {
        Tensor3::from_fn(self.dim, |i, j, k| {
            (self[(i, j, k)]
                + self[(i, k, j)]
                + self[(j, i, k)]
                + self[(j, k, i)]
                + self[(k, i, j)]
                + self[(k, j, i)])
                / 6.0
        })
    }

    /// `T(u, v, w)`.
    pub fn apply(&self, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let uv = u[i] * v[j];
                if uv == 0.0 {
                    continue;
                }
                let base = self.offset(i, j, 0);
                let row = &self.data[base..base + d];
                acc += uv * row.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        acc
    }

    /// The vector `T(·, u, u)`, i.e. one third of the gradient of `u ↦ T(u, u, u)`.
    pub fn contract_twice(&self, u: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |i, _| {
            let mut acc = 0.0;
            for j in 0..d {
                let base = self.offset(i, j, 0);
                let row = &self.data[base..base + d];
                acc += u[j] * row.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
            acc
        })
    }

    /// The matrix `T(·, ·, u)`.
    pub fn contract_last(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |i, j| {
            let base = self.offset(i, j, 0);
            self.data[base..base + d]
                .iter()
                .zip(u.iter())
                .map(|(a, b)| a * b)
                .sum()
        })
    }

    /// Change of variables in every slot: `T̃(a, b, c) = Σ T(i, j, k) P(i, a) P(j, b) P(k, c)`.
    pub fn transform(&self, p: &DMatrix<f64>) -> Self {
        let d = self.dim;
        assert_eq!(p.nrows(), d, "transform matrix row count must match tensor dimension");
        let m = p.ncols();
        // Contract one slot at a time: O(d^3 m) instead of O(d^3 m^3).
        let mut s1 = vec![0.0; m * d * d];
        for a in 0..m {
            for i in 0..d {
                let pia = p[(i, a)];
                if pia == 0.0 {
                    continue;
                }
                for j in 0..d {
                    for k in 0..d {
                        s1[(a * d + j) * d + k] += pia * self[(i, j, k)];
                    }
                }
            }
        }
        let mut s2 = vec![0.0; m * m * d];
        for a in 0..m {
            for b in 0..m {
                for j in 0..d {
                    let pjb = p[(j, b)];
                    if pjb == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        s2[(a * m + b) * d + k] += pjb * s1[(a * d + j) * d + k];
                    }
                }
            }
        }
        let mut out = Tensor3::zeros(m);
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += p[(k, c)] * s2[(a * m + b) * d + k];
                    }
                    out[(a, b, c)] = acc;
                }
            }
        }
        out
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(i, j, k)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    #[inline]
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }
}

impl AddAssign<&Tensor3> for Tensor3 {
    fn add_assign(&mut self, rhs: &Tensor3) {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
    }
}
