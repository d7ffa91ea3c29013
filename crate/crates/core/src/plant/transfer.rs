use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

/// Strictly proper SISO transfer function with a monic denominator:
///
/// ```text
///          beta[n-r] z^(n-r) + ... + beta[0]
/// G(z) = -------------------------------------
///         z^n + alpha[n-1] z^(n-1) + ... + alpha[0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunctionModel {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl TransferFunctionModel {
    /// `alpha` holds the `n` non-leading denominator coefficients and `beta`
    /// the `n - r + 1` numerator coefficients, both in ascending powers.
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(Error::InvalidModel("order must be at least 1".into()));
        }
        if beta.is_empty() || beta.len() > n {
            return Err(Error::InvalidModel(format!(
                "numerator must have between 1 and {n} coefficients, got {}",
                beta.len()
            )));
        }
        if *beta.last().unwrap() == 0.0 {
            return Err(Error::InvalidModel(
                "leading numerator coefficient must be nonzero".into(),
            ));
        }
        if alpha.iter().chain(&beta).any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn relative_degree(&self) -> usize {
        self.alpha.len() + 1 - self.beta.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Leading numerator coefficient `beta[n-r]`.
    pub fn leading_beta(&self) -> f64 {
        *self.beta.last().unwrap()
    }

    /// Full monic denominator in ascending powers.
    pub fn denominator(&self) -> Vec<f64> {
        let mut d = self.alpha.clone();
        d.push(1.0);
        d
    }

    pub fn numerator(&self) -> &[f64] {
        &self.beta
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        poly::eval_complex(&self.beta, z) / poly::eval_complex(&self.denominator(), z)
    }
}
