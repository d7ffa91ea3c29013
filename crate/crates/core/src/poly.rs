//! Real polynomials stored in ascending powers (`coeffs[k]` multiplies `z^k`).

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Horner evaluation at a real point.
pub fn eval(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

pub fn eval_complex(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Value and first derivative at a complex point.
fn eval_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Monic polynomial with the given real roots and complex-conjugate pairs.
pub fn from_roots(real: &[f64], pairs: &[Complex64]) -> Vec<f64> {
    let mut p = vec![1.0];
    for &r in real {
        p = mul(&p, &[-r, 1.0]);
    }
    for z in pairs {
        p = mul(&p, &[z.norm_sqr(), -2.0 * z.re, 1.0]);
    }
    p
}

/// Degree after discarding leading coefficients that are exactly zero.
pub fn degree(coeffs: &[f64]) -> Option<usize> {
    coeffs.iter().rposition(|&c| c != 0.0)
}

/// All roots of the polynomial.
///
/// The roots are the eigenvalues of the companion matrix of the monic
/// normalisation (computed through a real Schur decomposition, i.e. shifted QR
/// sweeps), each refined by Newton steps on the original coefficients for as
/// long as the residual keeps shrinking.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let Some(deg) = degree(coeffs) else {
        return Vec::new();
    };
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut companion = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let coeffs = &coeffs[..=deg];
    companion
        .complex_eigenvalues()
        .iter()
        .map(|&z0| polish(coeffs, z0))
        .collect()
}

fn polish(coeffs: &[f64], mut z: Complex64) -> Complex64 {
    let mut residual = eval_complex(coeffs, z).norm();
    for _ in 0..8 {
        let (p, dp) = eval_with_derivative(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let candidate = z - p / dp;
        let r = eval_complex(coeffs, candidate).norm();
        if !(r < residual) {
            break;
        }
        z = candidate;
        residual = r;
    }
    z
}
