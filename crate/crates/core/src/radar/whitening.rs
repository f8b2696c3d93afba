//! Separable slow-time/fast-time whitening. The spatial axis is left alone
//! so that target directions survive.
//!
//! The clutter-plus-noise covariance `δ²(B_f ⊗ B_t ⊗ B_sp) + σ²I` is not
//! separable, so each axis operator is the inverse square root of that
//! axis's *effective* covariance given the other operator:
//!
//! `W_t = (a_t B_t + b_t I)^{−1/2}`, `a_t = δ² (tr B_sp / M) tr(W_f B_f W_f)/V`,
//! `b_t = σ² tr(W_f²)/V`, and symmetrically for `W_f`. With these, the
//! time- and frequency-axis second moments of the whitened cube are exactly
//! the identity. The pair is found by fixed-point iteration on eigenvalues.

use crate::covariance::ClutterCovariance;
use crate::linalg::{self, Axis, ComplexMatrix, ComplexTensor3, HermitianEigen};
use crate::radar::EstimatedClutter;
use crate::{Error, Result};

/// Statistics a whitener is fitted to.
#[derive(Clone, Debug)]
pub struct WhiteningModel {
    /// `tr(B_sp)/M`.
    pub space_scale: f64,
    pub time: ComplexMatrix,
    pub freq: ComplexMatrix,
    pub power: f64,
    pub noise_var: f64,
}

impl WhiteningModel {
    pub fn from_truth(cov: &ClutterCovariance, noise_var: f64) -> Self {
        Self {
            space_scale: linalg::trace_re(&cov.space) / cov.space.nrows() as f64,
            time: cov.time.clone(),
            freq: cov.frequency.total(),
            power: cov.power,
            noise_var,
        }
    }

    pub fn from_estimate(est: &EstimatedClutter, noise_var: f64) -> Self {
        Self {
            space_scale: linalg::trace_re(&est.space) / est.space.nrows() as f64,
            time: est.time.clone(),
            freq: est.frequency.clone(),
            power: est.power,
            noise_var,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Whitener {
    pub time: ComplexMatrix,
    pub freq: ComplexMatrix,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-13;

fn axis_map(eig: &HermitianEigen, a: f64, b: f64) -> Vec<f64> {
    eig.values.iter().map(|&l| 1.0 / (a * l.max(0.0) + b)).collect()
}

impl Whitener {
    pub fn identity(slots: usize, subcarriers: usize) -> Self {
        Self {
            time: ComplexMatrix::identity(slots, slots),
            freq: ComplexMatrix::identity(subcarriers, subcarriers),
            iterations: 0,
        }
    }

    pub fn fit(model: &WhiteningModel) -> Result<Self> {
        if model.power < 0.0 || model.noise_var < 0.0 {
            return Err(Error::InvalidParameter("powers must be non-negative".into()));
        }
        let et = linalg::psd_eig(&model.time)?;
        let ef = linalg::psd_eig(&model.freq)?;
        let (ni, nv) = (model.time.nrows() as f64, model.freq.nrows() as f64);
        let p = model.power * model.space_scale;
        let s2 = model.noise_var;
        if p == 0.0 && s2 == 0.0 {
            return Err(Error::Degenerate("nothing to whiten against".into()));
        }
        // g = eigenvalues of W², i.e. 1/(a λ + b) per axis.
        let mut gf = vec![1.0; ef.values.len()];
        let mut gt = vec![1.0; et.values.len()];
        let mut iterations = 0;
        for it in 0..MAX_ITERATIONS {
            let f_signal: f64 = ef.values.iter().zip(&gf).map(|(l, g)| l.max(0.0) * g).sum::<f64>() / nv;
            let f_noise: f64 = gf.iter().sum::<f64>() / nv;
            let new_t = axis_map(&et, p * f_signal, s2 * f_noise);
            let t_signal: f64 = et.values.iter().zip(&new_t).map(|(l, g)| l.max(0.0) * g).sum::<f64>() / ni;
            let t_noise: f64 = new_t.iter().sum::<f64>() / ni;
            let new_f = axis_map(&ef, p * t_signal, s2 * t_noise);
            let change = new_t.iter().zip(&gt).chain(new_f.iter().zip(&gf)).map(|(a, b)| (a - b).abs() / a.abs().max(b.abs())).fold(0.0, f64::max);
            gt = new_t;
            gf = new_f;
            iterations = it + 1;
            if change < TOLERANCE {
                break;
            }
        }
        if gt.iter().chain(&gf).any(|g| !g.is_finite()) {
            return Err(Error::Degenerate("whitening fixed point diverged".into()));
        }
        let time = et.map_values(&gt.iter().map(|g| g.sqrt()).collect::<Vec<_>>());
        let freq = ef.map_values(&gf.iter().map(|g| g.sqrt()).collect::<Vec<_>>());
        Ok(Self { time, freq, iterations })
    }

    /// `Y ×₂ W_t ×₃ W_f`.
    pub fn apply(&self, cube: &ComplexTensor3) -> Result<ComplexTensor3> {
        let [_, i, v] = cube.dims();
        if self.time.nrows() != i || self.freq.nrows() != v {
            return Err(Error::Dimension(format!(
                "whitener is {}×{} but cube has I={i}, V={v}",
                self.time.nrows(),
                self.freq.nrows()
            )));
        }
        cube.mode_product(Axis::Second, &self.time)?.mode_product(Axis::Third, &self.freq)
    }
}
