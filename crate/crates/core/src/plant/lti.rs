use nalgebra::{DMatrix, DVector, RowDVector};

use super::nonlinear::ControlAffine;
use super::transfer::TransferFunctionModel;
use crate::error::{check_dim, Error, Result};

/// `x(t+1) = A x(t) + b u(t)`, `y(t) = c x(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiStateSpace {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: RowDVector<f64>,
}

impl LtiStateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("state dimension must be positive".into()));
        }
        check_dim("A columns", n, a.ncols())?;
        check_dim("b rows", n, b.len())?;
        check_dim("c columns", n, c.len())?;
        Ok(Self { a, b, c })
    }

    pub fn from_slices(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Self> {
        let n = a.len();
        if a.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidModel("A must be square".into()));
        }
        let a = DMatrix::from_fn(n, n, |i, j| a[i][j]);
        Self::new(
            a,
            DVector::from_column_slice(b),
            RowDVector::from_row_slice(c),
        )
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &RowDVector<f64> {
        &self.c
    }

    /// One update. The returned output belongs to the *current* state.
    pub fn step(&self, x: &DVector<f64>, u: f64) -> Result<(DVector<f64>, f64)> {
        check_dim("state", self.n(), x.len())?;
        let y = self.c.dot(&x.transpose());
        Ok((&self.a * x + &self.b * u, y))
    }

    /// Markov parameter `c A^k b`.
    pub fn markov(&self, k: usize) -> f64 {
        let mut v = self.b.clone();
        for _ in 0..k {
            v = &self.a * v;
        }
        (&self.c * v)[0]
    }

    /// Spectral radius of `A`.
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl ControlAffine for LtiStateSpace {
    fn state_dim(&self) -> usize {
        self.n()
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    fn input_gain(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.b.clone()
    }

    fn output(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(&x.transpose())
    }
}

/// Transfer function of a state-space model.
///
/// The characteristic polynomial and the adjugate of `zI - A` come from the
/// Faddeev-LeVerrier recursion:
///
/// ```text
/// M_0 = I,  a_{n-k} = -tr(A M_{k-1}) / k,  M_k = A M_{k-1} + a_{n-k} I
/// adj(zI - A) = sum_{k=1..n} M_{k-1} z^{n-k}
/// ```
///
/// Numerator coefficients below `1e-12` times the largest one are treated as
/// rounding noise when locating the leading term.
pub fn ss_to_tf(sys: &LtiStateSpace) -> Result<TransferFunctionModel> {
    let n = sys.n();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut m = identity.clone();
    let mut den = vec![0.0; n + 1];
    den[n] = 1.0;
    let mut num = vec![0.0; n];
    for k in 1..=n {
        // c M_{k-1} b multiplies z^{n-k}
        num[n - k] = (sys.c() * &m * sys.b())[0];
        let am = sys.a() * &m;
        let coeff = -am.trace() / k as f64;
        den[n - k] = coeff;
        m = am + &identity * coeff;
    }

    let scale = num.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::ZeroTransferFunction);
    }
    let lead = num
        .iter()
        .rposition(|c| c.abs() > 1e-12 * scale)
        .ok_or(Error::ZeroTransferFunction)?;
    num.truncate(lead + 1);
    den.truncate(n);
    TransferFunctionModel::new(den, num)
}

/// Controllable canonical realisation: companion `A` with the negated
/// denominator in the last row, `b = e_n`, `c = [beta_0 .. beta_{n-r}, 0 ..]`.
pub fn tf_to_ss(tf: &TransferFunctionModel) -> LtiStateSpace {
    let n = tf.order();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for (j, &alpha) in tf.alpha().iter().enumerate() {
        a[(n - 1, j)] = -alpha;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let mut c = RowDVector::<f64>::zeros(n);
    for (j, &beta) in tf.beta().iter().enumerate() {
        c[j] = beta;
    }
    LtiStateSpace { a, b, c }
}
