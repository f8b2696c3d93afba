//! Dense complex kernels.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` and therefore column-major,
//! which matches the column-stacking `vec(·)` used throughout the crate.
//! Large products go through `matrixmultiply::zgemm`, which is several times
//! faster than nalgebra's generic complex product.

mod tensor;

pub use tensor::{Axis, ComplexTensor3};

use matrixmultiply::CGemmOption;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Default relative tolerance for the Hermitian check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default relative floor below which an eigenvalue counts as negative.
pub const PSD_TOL: f64 = 1e-10;

/// Unit-modulus phasor `e^{j·phase}`.
#[inline]
pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// `C = A · B` (or `C += A · B` when `accumulate`), column-major operands.
fn zgemm(a: &ComplexMatrix, b: &ComplexMatrix, c: &mut ComplexMatrix, accumulate: bool) {
    let (m, k) = a.shape();
    let n = b.ncols();
    assert_eq!(k, b.nrows(), "inner dimensions differ");
    assert_eq!(c.shape(), (m, n), "output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(ZERO);
        }
        return;
    }
    let beta = if accumulate { [1.0, 0.0] } else { [0.0, 0.0] };
    // SAFETY: Complex64 is #[repr(C)] {re, im}, layout-identical to [f64; 2];
    // strides describe the contiguous column-major buffers checked above.
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            beta,
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// `A · B`.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut c = ComplexMatrix::zeros(a.nrows(), b.ncols());
    zgemm(a, b, &mut c, false);
    c
}

/// `A · Bᴴ`.
pub fn matmul_adj(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut c = ComplexMatrix::zeros(a.nrows(), b.nrows());
    zgemm(a, &b.adjoint(), &mut c, false);
    c
}

/// `Aᴴ · B`.
pub fn adj_matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut c = ComplexMatrix::zeros(a.ncols(), b.ncols());
    zgemm(&a.adjoint(), b, &mut c, false);
    c
}

/// `A · Aᴴ`, returned exactly Hermitian.
pub fn gram(a: &ComplexMatrix) -> ComplexMatrix {
    let mut c = matmul_adj(a, a);
    symmetrize(&mut c);
    c
}

/// `C += A · Aᴴ` (the caller is responsible for final symmetrisation).
pub fn gram_accumulate(a: &ComplexMatrix, c: &mut ComplexMatrix) {
    zgemm(a, &a.adjoint(), c, true);
}

/// Replace `A` by `(A + Aᴴ)/2`.
pub fn symmetrize(a: &mut ComplexMatrix) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// Largest `|A[l,m] − conj(A[m,l])|`.
pub fn hermitian_deviation(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut dev = 0.0_f64;
    for j in 0..n {
        for i in j..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn check_hermitian(a: &ComplexMatrix, rel_tol: f64) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let deviation = hermitian_deviation(a);
    let allowed = rel_tol * max_abs(a);
    if deviation > allowed {
        return Err(Error::NotHermitian { deviation, allowed });
    }
    Ok(())
}

/// Kronecker product; `result[(i·b.rows + k, j·b.cols + l)] = a[i,j]·b[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `U diag(g(λ)) Uᴴ`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.vectors.nrows();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let s = g(lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        let mut out = matmul_adj(&scaled, &self.vectors);
        debug_assert_eq!(out.nrows(), n);
        symmetrize(&mut out);
        out
    }

    /// `U diag(d) Uᴴ` with one value per eigenvector.
    pub fn map_values(&self, d: &[f64]) -> ComplexMatrix {
        assert_eq!(d.len(), self.values.len(), "one value per eigenvector");
        let mut scaled = self.vectors.clone();
        for (j, &s) in d.iter().enumerate() {
            scaled.column_mut(j).scale_mut(s);
        }
        let mut out = matmul_adj(&scaled, &self.vectors);
        symmetrize(&mut out);
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|l| l)
    }

    /// First `k` eigenvectors (the dominant subspace).
    pub fn leading(&self, k: usize) -> ComplexMatrix {
        self.vectors.columns(0, k).into_owned()
    }

    /// Everything after the first `k` eigenvectors.
    pub fn trailing(&self, k: usize) -> ComplexMatrix {
        let n = self.vectors.ncols();
        self.vectors.columns(k, n - k).into_owned()
    }

    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

pub fn hermitian_eig(a: &ComplexMatrix) -> Result<HermitianEigen> {
    hermitian_eig_tol(a, HERMITIAN_TOL)
}

pub fn hermitian_eig_tol(a: &ComplexMatrix, rel_tol: f64) -> Result<HermitianEigen> {
    check_hermitian(a, rel_tol)?;
    let mut sym = a.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = a.nrows();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// Eigendecomposition plus a check that no eigenvalue is below `−PSD_TOL·λ_max`.
pub fn psd_eig(a: &ComplexMatrix) -> Result<HermitianEigen> {
    let eig = hermitian_eig(a)?;
    let scale = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = -PSD_TOL * scale;
    if let Some(&worst) = eig.values.last() {
        if worst < floor {
            return Err(Error::NotPsd { eigenvalue: worst, floor });
        }
    }
    Ok(eig)
}

/// `U (Λ + ridge·I)^{−1/2} Uᴴ`.
pub fn inv_sqrt_psd(a: &ComplexMatrix, ridge: f64) -> Result<ComplexMatrix> {
    if ridge < 0.0 {
        return Err(Error::InvalidParameter(format!("ridge must be non-negative, got {ridge}")));
    }
    let eig = psd_eig(a)?;
    let scale = eig.max_value().max(ridge);
    for &l in &eig.values {
        if l.max(0.0) + ridge <= PSD_TOL * scale || scale == 0.0 {
            return Err(Error::Degenerate("inverse square root of a singular matrix".into()));
        }
    }
    Ok(eig.map(|l| 1.0 / (l.max(0.0) + ridge).sqrt()))
}

/// Principal square root of a PSD matrix; tiny negative eigenvalues are clipped.
pub fn sqrt_psd(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = psd_eig(a)?;
    Ok(eig.map(|l| l.max(0.0).sqrt()))
}

/// Tall factor `L` with `L Lᴴ = A`, keeping only eigen-directions whose
/// eigenvalue exceeds `rel_cut·λ_max`.
pub fn psd_factor(a: &ComplexMatrix, rel_cut: f64) -> Result<ComplexMatrix> {
    let eig = psd_eig(a)?;
    let cut = rel_cut * eig.max_value();
    let rank = eig.values.iter().take_while(|&&l| l > cut && l > 0.0).count();
    let mut factor = eig.leading(rank.max(1));
    if rank == 0 {
        factor.fill(ZERO);
        return Ok(factor);
    }
    for j in 0..rank {
        factor.column_mut(j).scale_mut(eig.values[j].sqrt());
    }
    Ok(factor)
}

/// Hermitian Toeplitz matrix with first column `r`:
/// `result[l,m] = r[l−m]` for `l ≥ m`, `conj(r[m−l])` otherwise.
pub fn toeplitz_hermitian(r: &[Complex64]) -> ComplexMatrix {
    assert!(!r.is_empty(), "Toeplitz generator must be nonempty");
    let n = r.len();
    ComplexMatrix::from_fn(n, n, |l, m| if l >= m { r[l - m] } else { r[m - l].conj() })
}

/// Real symmetric Toeplitz matrix `result[l,m] = r[|l−m|]`.
pub fn toeplitz_symmetric(r: &[f64]) -> DMatrix<f64> {
    assert!(!r.is_empty(), "Toeplitz generator must be nonempty");
    let n = r.len();
    DMatrix::from_fn(n, n, |l, m| r[l.abs_diff(m)])
}

pub fn to_complex(a: &DMatrix<f64>) -> ComplexMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn trace_re(a: &ComplexMatrix) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

pub fn frobenius_sq(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `‖Â − A‖²_F / ‖A‖²_F`.
pub fn relative_frobenius_sq(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> f64 {
    frobenius_sq(&(estimate - truth)) / frobenius_sq(truth)
}

/// Solve `A X = B` for Hermitian positive definite `A` via Cholesky. If the
/// factorisation fails or the matrix is badly conditioned, a ridge of
/// `1e-12·tr(A)` is added first.
pub fn hermitian_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut sym = a.clone();
    symmetrize(&mut sym);
    let diag: Vec<f64> = sym.diagonal().iter().map(|z| z.re).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let suspicious = dmin <= 0.0 || dmax / dmin > 1e12;
    if !suspicious {
        if let Some(ch) = sym.clone().cholesky() {
            let l_diag: Vec<f64> = ch.l_dirty().diagonal().iter().map(|z| z.re).collect();
            let lmax = l_diag.iter().cloned().fold(0.0, f64::max);
            let lmin = l_diag.iter().cloned().fold(f64::INFINITY, f64::min);
            if lmin > 0.0 && (lmax / lmin).powi(2) <= 1e12 {
                return Ok(ch.solve(b));
            }
        }
    }
    let ridge = 1e-12 * trace_re(&sym).abs();
    log::warn!("ill-conditioned Hermitian solve; adding ridge {ridge:.3e}");
    for i in 0..sym.nrows() {
        sym[(i, i)] += Complex64::new(ridge, 0.0);
    }
    sym.cholesky()
        .map(|ch| ch.solve(b))
        .ok_or_else(|| Error::Degenerate("matrix is not positive definite even after ridge".into()))
}

#[cfg(test)]
mod tests;
