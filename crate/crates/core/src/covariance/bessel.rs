use std::f64::consts::{FRAC_PI_4, PI};

/// Bessel function of the first kind, order zero.
///
/// Three regimes, each accurate to about 1e-13 absolute:
/// ascending series for `|x| < 8`, trapezoidal quadrature of
/// `(1/π)∫₀^π cos(x cos t) dt` up to `|x| < 25` (the rule is spectrally
/// accurate for periodic integrands once the node count exceeds `|x|`), and
/// the Hankel asymptotic expansion beyond.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 8.0 {
        series(ax)
    } else if ax < 25.0 {
        quadrature(ax)
    } else {
        asymptotic(ax)
    }
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= -q / (k * k);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-3) {
            return sum;
        }
        k += 1.0;
    }
}

fn quadrature(x: f64) -> f64 {
    let n = (2.0 * x) as usize + 48;
    let h = PI / n as f64;
    // Trapezoid on [0, π] with half weights at the ends.
    let mut sum = 0.5 * (x.cos() + (-x).cos());
    for k in 1..n {
        sum += (x * (k as f64 * h).cos()).cos();
    }
    sum / n as f64
}

fn asymptotic(x: f64) -> f64 {
    // a_k = Π_{j≤k} (−(2j−1)²) / (k!·8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a: f64 = 1.0;
    let mut xpow = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        let term = a / xpow;
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        let j = (k + 1) as f64;
        a *= -(2.0 * j - 1.0).powi(2) / (j * 8.0);
        xpow *= x;
        if last < 1e-18 {
            break;
        }
    }
    let phase = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * phase.cos() - q * phase.sin())
}
