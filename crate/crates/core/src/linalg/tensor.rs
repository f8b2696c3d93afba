use num_complex::Complex64;

use super::{matmul, ComplexMatrix, ZERO};
use crate::error::{Error, Result};

/// Tensor mode. For a radar cube the modes are antenna, slot and subcarrier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    First,
    Second,
    Third,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::First, Axis::Second, Axis::Third];
}

/// Third-order complex tensor stored first-index-fastest:
/// entry `(a, b, c)` lives at `a + d1·(b + d2·c)`.
///
/// With this layout `vec(T)` has covariance `B₃ ⊗ B₂ ⊗ B₁` when the tensor is
/// coloured by `Bₖ` along mode `k`.
///
/// Unfoldings follow the column-stacking convention: mode 1 gives a
/// `d1 × d2·d3` matrix with column `b + d2·c`, mode 2 a `d2 × d1·d3` matrix
/// with column `a + d1·c`, mode 3 a `d3 × d1·d2` matrix with column `a + d1·b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor3 {
    dims: [usize; 3],
    data: Vec<Complex64>,
}

impl ComplexTensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![ZERO; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Dimension(format!(
                "tensor {:?} needs {} entries, got {}",
                dims,
                dims[0] * dims[1] * dims[2],
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for c in 0..dims[2] {
            for b in 0..dims[1] {
                for a in 0..dims[0] {
                    data.push(f(a, b, c));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, a: usize, b: usize, c: usize) -> usize {
        debug_assert!(a < self.dims[0] && b < self.dims[1] && c < self.dims[2]);
        a + self.dims[0] * (b + self.dims[1] * c)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> Complex64 {
        self.data[self.offset(a, b, c)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, value: Complex64) {
        let o = self.offset(a, b, c);
        self.data[o] = value;
    }

    /// Contiguous mode-1 fibre at `(·, b, c)`.
    pub fn fibre(&self, b: usize, c: usize) -> &[Complex64] {
        let start = self.offset(0, b, c);
        &self.data[start..start + self.dims[0]]
    }

    pub fn fibre_mut(&mut self, b: usize, c: usize) -> &mut [Complex64] {
        let start = self.offset(0, b, c);
        let d1 = self.dims[0];
        &mut self.data[start..start + d1]
    }

    pub fn add_assign(&mut self, other: &ComplexTensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += *y;
        }
        Ok(())
    }

    pub fn scale_mut(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn unfold(&self, axis: Axis) -> ComplexMatrix {
        let [d1, d2, d3] = self.dims;
        match axis {
            Axis::First => ComplexMatrix::from_column_slice(d1, d2 * d3, &self.data),
            Axis::Second => {
                let mut m = ComplexMatrix::zeros(d2, d1 * d3);
                for c in 0..d3 {
                    for b in 0..d2 {
                        for a in 0..d1 {
                            m[(b, a + d1 * c)] = self.data[a + d1 * (b + d2 * c)];
                        }
                    }
                }
                m
            }
            Axis::Third => {
                let mut m = ComplexMatrix::zeros(d3, d1 * d2);
                for c in 0..d3 {
                    for b in 0..d2 {
                        for a in 0..d1 {
                            m[(c, a + d1 * b)] = self.data[a + d1 * (b + d2 * c)];
                        }
                    }
                }
                m
            }
        }
    }

    pub fn fold(m: &ComplexMatrix, axis: Axis, dims: [usize; 3]) -> Result<Self> {
        let [d1, d2, d3] = dims;
        let expected = match axis {
            Axis::First => (d1, d2 * d3),
            Axis::Second => (d2, d1 * d3),
            Axis::Third => (d3, d1 * d2),
        };
        if (m.nrows(), m.ncols()) != expected {
            return Err(Error::Dimension(format!(
                "cannot fold {}x{} along {:?} into {:?}",
                m.nrows(),
                m.ncols(),
                axis,
                dims
            )));
        }
        let mut t = Self::zeros(dims);
        match axis {
            Axis::First => t.data.copy_from_slice(m.as_slice()),
            Axis::Second => {
                for c in 0..d3 {
                    for b in 0..d2 {
                        for a in 0..d1 {
                            t.data[a + d1 * (b + d2 * c)] = m[(b, a + d1 * c)];
                        }
                    }
                }
            }
            Axis::Third => {
                for c in 0..d3 {
                    for b in 0..d2 {
                        for a in 0..d1 {
                            t.data[a + d1 * (b + d2 * c)] = m[(c, a + d1 * b)];
                        }
                    }
                }
            }
        }
        Ok(t)
    }

    /// Mode product: `fold(W · unfold(T, axis))`. `W` may change the mode's size.
    pub fn mode_product(&self, axis: Axis, w: &ComplexMatrix) -> Result<Self> {
        let idx = axis_index(axis);
        if w.ncols() != self.dims[idx] {
            return Err(Error::Dimension(format!(
                "mode product needs {} columns, operator has {}",
                self.dims[idx],
                w.ncols()
            )));
        }
        let mut dims = self.dims;
        dims[idx] = w.nrows();
        let product = matmul(w, &self.unfold(axis));
        Self::fold(&product, axis, dims)
    }
}

pub(crate) fn axis_index(axis: Axis) -> usize {
    match axis {
        Axis::First => 0,
        Axis::Second => 1,
        Axis::Third => 2,
    }
}
