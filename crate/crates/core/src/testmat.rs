//! Deterministic generators for the standard test-matrix families.

use crate::tridiag::Tridiagonal;
use crate::{Error, EPS_WORK};

/// Test-matrix family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    /// Diagonal matrix with uniformly spaced eigenvalues in [eps, 1].
    Uniform,
    /// Diagonal matrix with geometrically spaced eigenvalues in [eps, 1].
    Geometric,
    /// Twos on the diagonal, ones off the diagonal.
    OneTwoOne,
    /// Zero diagonal, beta_k = sqrt(k (n-k)); integer spectrum.
    Clement,
    /// W_n^+: diagonal (m, ..., 1, 0, 1, ..., m), unit off-diagonals.
    Wilkinson,
    /// Zero diagonal, beta_k = (k+1)/sqrt((2k+1)(2k+3)).
    Legendre,
    /// Diagonal (3, 5, ..., 2n+1), off-diagonal (2, 3, ..., n).
    Laguerre,
    /// Zero diagonal, beta_k = sqrt(k).
    Hermite,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 8] = [
        MatrixKind::Uniform,
        MatrixKind::Geometric,
        MatrixKind::OneTwoOne,
        MatrixKind::Clement,
        MatrixKind::Wilkinson,
        MatrixKind::Legendre,
        MatrixKind::Laguerre,
        MatrixKind::Hermite,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MatrixKind::Uniform => "uniform",
            MatrixKind::Geometric => "geometric",
            MatrixKind::OneTwoOne => "one21",
            MatrixKind::Clement => "clement",
            MatrixKind::Wilkinson => "wilkinson",
            MatrixKind::Legendre => "legendre",
            MatrixKind::Laguerre => "laguerre",
            MatrixKind::Hermite => "hermite",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(MatrixKind::Uniform),
            "geometric" => Ok(MatrixKind::Geometric),
            "one21" | "121" | "1-2-1" => Ok(MatrixKind::OneTwoOne),
            "clement" => Ok(MatrixKind::Clement),
            "wilkinson" => Ok(MatrixKind::Wilkinson),
            "legendre" => Ok(MatrixKind::Legendre),
            "laguerre" => Ok(MatrixKind::Laguerre),
            "hermite" => Ok(MatrixKind::Hermite),
            other => Err(Error::InvalidArgument(format!("unknown matrix kind '{other}'"))),
        }
    }
}

/// Generate the `kind` test matrix of size `n`. The Wilkinson family exists
/// only for odd `n`.
pub fn generate(kind: MatrixKind, n: usize) -> Result<Tridiagonal, Error> {
    if n < 1 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    match kind {
        MatrixKind::Uniform => {
            let alpha = if n == 1 {
                vec![EPS_WORK]
            } else {
                (1..=n)
                    .map(|k| EPS_WORK + (k - 1) as f64 * (1.0 - EPS_WORK) / (n - 1) as f64)
                    .collect()
            };
            Tridiagonal::new(alpha, vec![0.0; n - 1])
        }
        MatrixKind::Geometric => {
            let alpha = if n == 1 {
                vec![1.0]
            } else {
                (1..=n)
                    .map(|k| EPS_WORK.powf((n - k) as f64 / (n - 1) as f64))
                    .collect()
            };
            Tridiagonal::new(alpha, vec![0.0; n - 1])
        }
        MatrixKind::OneTwoOne => Tridiagonal::new(vec![2.0; n], vec![1.0; n - 1]),
        MatrixKind::Clement => {
            let beta = (1..n).map(|k| ((k * (n - k)) as f64).sqrt()).collect();
            Tridiagonal::new(vec![0.0; n], beta)
        }
        MatrixKind::Wilkinson => {
            if n % 2 == 0 {
                return Err(Error::InvalidArgument("Wilkinson matrices need odd n".into()));
            }
            let m = (n - 1) / 2;
            let alpha = (0..n).map(|i| (m as i64 - i as i64).unsigned_abs() as f64).collect();
            Tridiagonal::new(alpha, vec![1.0; n - 1])
        }
        MatrixKind::Legendre => {
            let beta = (1..n)
                .map(|j| {
                    let k = (j + 1) as f64;
                    k / ((2.0 * k - 1.0) * (2.0 * k + 1.0)).sqrt()
                })
                .collect();
            Tridiagonal::new(vec![0.0; n], beta)
        }
        MatrixKind::Laguerre => {
            let alpha = (1..=n).map(|i| (2 * i + 1) as f64).collect();
            let beta = (1..n).map(|j| (j + 1) as f64).collect();
            Tridiagonal::new(alpha, beta)
        }
        MatrixKind::Hermite => {
            let beta = (1..n).map(|k| (k as f64).sqrt()).collect();
            Tridiagonal::new(vec![0.0; n], beta)
        }
    }
}
