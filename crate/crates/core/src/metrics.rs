//! Accuracy, robustness and clustering metrics, plus a dense Jacobi
//! eigensolver used as a brute-force oracle for cross-checking.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driver::{EigenSystem, VectorMatrix};
use crate::tridiag::Tridiagonal;
use crate::{Error, EPS_WORK};

/// Quality measurements of one solve, serialized as the report row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QualityReport {
    pub n: usize,
    pub kind: String,
    pub profile: String,
    /// Largest residual norm `max_i ||T x_i - lambda_i x_i||_1 / ||T||_1`.
    #[serde(rename = "R")]
    pub r: f64,
    /// Orthogonality `max_{i != j} |x_i . x_j|`.
    #[serde(rename = "O")]
    pub o: f64,
    /// Largest top-level cluster over matrix size.
    pub rho: f64,
    pub d_max: usize,
    /// This run counts as a robustness failure.
    pub phi_fail: bool,
    pub workers: usize,
    pub t_values_s: f64,
    pub t_vectors_s: f64,
    /// Orthogonality was sampled rather than evaluated over all pairs.
    pub o_sampled: bool,
    pub uncertified_shift_count: usize,
    pub total_shift_count: usize,
}

/// Pairwise-exact orthogonality up to this many vectors; sampled above.
const O_EXACT_LIMIT: usize = 4000;

/// Largest residual norm and orthogonality of a computed eigensystem.
///
/// For single-precision output the measurement is taken against the
/// single-precision rounding of the input matrix: products are formed from
/// binary32 values (accumulated in binary64, so the measurement itself does
/// not drown the error being measured).
pub fn residual_orthogonality(t: &Tridiagonal, es: &EigenSystem) -> Result<(f64, f64), Error> {
    let vectors = es
        .vectors
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("eigensystem has no vectors".into()))?;
    let r = match vectors {
        VectorMatrix::F64 { n, data } => residual_f64(t, &es.values, *n, data),
        VectorMatrix::F32 { n, data } => residual_f32(t, &es.values, *n, data),
    };
    let o = orthogonality(vectors).0;
    Ok((r, o))
}

fn residual_f64(t: &Tridiagonal, values: &[f64], n: usize, data: &[f64]) -> f64 {
    let a = t.alpha();
    let b = t.beta();
    let norm = t.one_norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for (j, &lam) in values.iter().enumerate() {
        let x = &data[j * n..(j + 1) * n];
        let mut sum = 0.0f64;
        for i in 0..n {
            let mut y = (a[i] - lam) * x[i];
            if i > 0 {
                y += b[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                y += b[i] * x[i + 1];
            }
            sum += y.abs();
        }
        worst = worst.max(sum / norm);
    }
    worst
}

fn residual_f32(t: &Tridiagonal, values: &[f64], n: usize, data: &[f32]) -> f64 {
    let a: Vec<f32> = t.alpha().iter().map(|&x| x as f32).collect();
    let b: Vec<f32> = t.beta().iter().map(|&x| x as f32).collect();
    let mut norm = 0.0f64;
    for j in 0..n {
        let mut s = a[j].abs() as f64;
        if j > 0 {
            s += b[j - 1].abs() as f64;
        }
        if j + 1 < n {
            s += b[j].abs() as f64;
        }
        norm = norm.max(s);
    }
    if norm == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    // Eigenvalues enter at delivered (binary64) precision; the matrix and
    // the vectors are the binary32 data a single-precision consumer sees.
    for (j, &lam) in values.iter().enumerate() {
        let x = &data[j * n..(j + 1) * n];
        let mut sum = 0.0f64;
        for i in 0..n {
            let mut y = (a[i] as f64 - lam) * x[i] as f64;
            if i > 0 {
                y += b[i - 1] as f64 * x[i - 1] as f64;
            }
            if i + 1 < n {
                y += b[i] as f64 * x[i + 1] as f64;
            }
            sum += y.abs();
        }
        worst = worst.max(sum / norm);
    }
    worst
}

/// Maximum pairwise dot product magnitude; the flag reports whether the
/// evaluation was sampled (vector count above the exact limit: each vector
/// against its neighbors plus 64 pseudo-random partners).
pub fn orthogonality(vectors: &VectorMatrix) -> (f64, bool) {
    let n = vectors.n();
    let k = vectors.cols();
    if k < 2 {
        return (0.0, false);
    }
    let col = |j: usize, buf: &mut Vec<f64>| {
        buf.clear();
        buf.extend((0..n).map(|i| vectors.get(i, j)));
    };
    let mut worst = 0.0f64;
    let mut xi = Vec::with_capacity(n);
    let mut xj = Vec::with_capacity(n);
    if k <= O_EXACT_LIMIT {
        for i in 0..k {
            col(i, &mut xi);
            for j in i + 1..k {
                col(j, &mut xj);
                let dot: f64 = xi.iter().zip(&xj).map(|(a, b)| a * b).sum();
                worst = worst.max(dot.abs());
            }
        }
        (worst, false)
    } else {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for i in 0..k {
            col(i, &mut xi);
            let mut partners: Vec<usize> = (1..=2).filter_map(|d| i.checked_sub(d)).collect();
            partners.extend((1..=2).map(|d| i + d).filter(|&j| j < k));
            partners.extend((0..64).map(|_| rng.random_range(0..k)).filter(|&j| j != i));
            for j in partners {
                col(j, &mut xj);
                let dot: f64 = xi.iter().zip(&xj).map(|(a, b)| a * b).sum();
                worst = worst.max(dot.abs());
            }
        }
        (worst, true)
    }
}

/// Load balance `mean(busy) / max(busy)` in (0, 1].
pub fn load_balance(busy: &[f64]) -> f64 {
    let max = busy.iter().fold(0.0f64, |m, &x| m.max(x));
    if max <= 0.0 {
        return 1.0;
    }
    let mean = busy.iter().sum::<f64>() / busy.len() as f64;
    mean / max
}

/// Clustering `rho`: largest top-level cluster over matrix size.
pub fn clustering(es: &EigenSystem) -> f64 {
    es.stats.largest_cluster as f64 / es.n as f64
}

/// Robustness over a test set: the fraction of runs that are not flagged.
pub fn robustness_phi(reports: &[QualityReport]) -> f64 {
    if reports.is_empty() {
        return 1.0;
    }
    let failures = reports.iter().filter(|r| r.phi_fail).count();
    1.0 - failures as f64 / reports.len() as f64
}

/// Assemble the report row for one solve. A run is flagged as a robustness
/// failure when a shift was accepted uncertified or the orthogonality
/// exceeds the practical bound `n * eps_work / gaptol`.
pub fn quality_report(
    t: &Tridiagonal,
    es: &EigenSystem,
    kind: &str,
    cfg: &crate::tridiag::SolverConfig,
) -> Result<QualityReport, Error> {
    let vectors = es
        .vectors
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("eigensystem has no vectors".into()))?;
    let r = match vectors {
        VectorMatrix::F64 { n, data } => residual_f64(t, &es.values, *n, data),
        VectorMatrix::F32 { n, data } => residual_f32(t, &es.values, *n, data),
    };
    let (o, o_sampled) = orthogonality(vectors);
    let phi_fail =
        es.stats.uncertified_count > 0 || o > es.n as f64 * EPS_WORK / cfg.gaptol;
    Ok(QualityReport {
        n: es.n,
        kind: kind.to_string(),
        profile: cfg.profile.name().to_string(),
        r,
        o,
        rho: clustering(es),
        d_max: es.stats.d_max,
        phi_fail,
        workers: cfg.worker_count,
        t_values_s: es.stats.t_values_s,
        t_vectors_s: es.stats.t_vectors_s,
        o_sampled,
        uncertified_shift_count: es.stats.uncertified_count,
        total_shift_count: es.stats.shift_count,
    })
}

// ---------------------------------------------------------------------------
// Dense Jacobi oracle
// ---------------------------------------------------------------------------

/// Size limit of the dense oracle.
pub const ORACLE_LIMIT: usize = 512;

/// Eigendecomposition computed by the oracle; values ascending, vectors
/// column major and matched to the values.
#[derive(Clone, Debug)]
pub struct DenseEig {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl DenseEig {
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Brute-force eigensolver: cyclic Jacobi rotations on the dense matrix
/// until the off-diagonal norm falls below `n * eps * ||T||_F`. Validates
/// its own output (residual and orthogonality below `50 n eps`) before
/// returning.
pub fn oracle_eig(t: &Tridiagonal) -> Result<DenseEig, Error> {
    let n = t.n();
    if n > ORACLE_LIMIT {
        return Err(Error::OracleLimit { n, limit: ORACLE_LIMIT });
    }
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        a[i * n + i] = t.alpha()[i];
    }
    for i in 0..n - 1 {
        a[i * n + i + 1] = t.beta()[i];
        a[(i + 1) * n + i] = t.beta()[i];
    }
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let tol = n as f64 * EPS_WORK * t.fro_norm();
    for _sweep in 0..60 {
        if off_norm(&a, n) <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let tt = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + tt * tt).sqrt();
                let s = tt * c;
                rotate(&mut a, n, p, q, c, s);
                rotate_cols(&mut v, n, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0f64; n * n];
    for (jnew, &jold) in order.iter().enumerate() {
        for i in 0..n {
            vectors[jnew * n + i] = v[i * n + jold];
        }
    }

    let out = DenseEig { values, vectors, n };
    validate_oracle(t, &out)?;
    Ok(out)
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Two-sided Jacobi rotation of rows/columns p and q.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..n {
        let aip = a[i * n + p];
        let aiq = a[i * n + q];
        a[i * n + p] = c * aip - s * aiq;
        a[i * n + q] = s * aip + c * aiq;
    }
    for j in 0..n {
        let apj = a[p * n + j];
        let aqj = a[q * n + j];
        a[p * n + j] = c * apj - s * aqj;
        a[q * n + j] = s * apj + c * aqj;
    }
}

/// Right-multiply the accumulated rotation into V (columns p and q).
fn rotate_cols(v: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..n {
        let vip = v[i * n + p];
        let viq = v[i * n + q];
        v[i * n + p] = c * vip - s * viq;
        v[i * n + q] = s * vip + c * viq;
    }
}

fn validate_oracle(t: &Tridiagonal, eig: &DenseEig) -> Result<(), Error> {
    let n = eig.n;
    let bound = 50.0 * n as f64 * EPS_WORK;
    let norm = t.one_norm().max(f64::MIN_POSITIVE);
    for j in 0..n {
        let x = eig.vector(j);
        let lam = eig.values[j];
        let mut sum = 0.0;
        for i in 0..n {
            let mut y = (t.alpha()[i] - lam) * x[i];
            if i > 0 {
                y += t.beta()[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                y += t.beta()[i] * x[i + 1];
            }
            sum += y.abs();
        }
        if sum / norm > bound {
            return Err(Error::InvalidArgument(format!(
                "oracle self-check failed: residual {} at column {j}",
                sum / norm
            )));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = eig.vector(i).iter().zip(eig.vector(j)).map(|(a, b)| a * b).sum();
            if dot.abs() > bound {
                return Err(Error::InvalidArgument(format!(
                    "oracle self-check failed: orthogonality {} at ({i}, {j})",
                    dot.abs()
                )));
            }
        }
    }
    Ok(())
}
