//! Tridiagonal matrix type, preprocessing (scaling and splitting into
//! numerically irreducible blocks), and Gershgorin bounds.

use crate::profile::{self, Profile};
use crate::{Error, EPS_WORK};

/// A real symmetric tridiagonal matrix, stored as its diagonal and
/// off-diagonal entries. Immutable after construction; all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, Error> {
        if alpha.is_empty() {
            return Err(Error::InvalidMatrix("n must be at least 1".into()));
        }
        if beta.len() + 1 != alpha.len() {
            return Err(Error::InvalidMatrix(format!(
                "off-diagonal length {} does not match n = {}",
                beta.len(),
                alpha.len()
            )));
        }
        if !alpha.iter().chain(beta.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidMatrix("entries must be finite".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Maximum column sum of absolute values.
    pub fn one_norm(&self) -> f64 {
        let n = self.n();
        let mut best = 0.0f64;
        for j in 0..n {
            let mut s = self.alpha[j].abs();
            if j > 0 {
                s += self.beta[j - 1].abs();
            }
            if j + 1 < n {
                s += self.beta[j].abs();
            }
            best = best.max(s);
        }
        best
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        let d: f64 = self.alpha.iter().map(|x| x * x).sum();
        let e: f64 = self.beta.iter().map(|x| 2.0 * x * x).sum();
        (d + e).sqrt()
    }

    /// Multiply all entries by `s` (used by power-of-two scaling).
    pub fn scaled(&self, s: f64) -> Tridiagonal {
        Tridiagonal {
            alpha: self.alpha.iter().map(|x| x * s).collect(),
            beta: self.beta.iter().map(|x| x * s).collect(),
        }
    }
}

/// A closed interval `[lo, hi]`, the uncertainty of an eigenvalue
/// approximation. Midpoint is the approximation, half-width its error bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn mid(&self) -> f64 {
        self.lo + (self.hi - self.lo) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn half_width(&self) -> f64 {
        self.width() / 2.0
    }

    /// Translate by `-tau`.
    pub fn shifted(&self, tau: f64) -> Interval {
        Interval { lo: self.lo - tau, hi: self.hi - tau }
    }
}

/// A principal submatrix produced by splitting, together with its offset in
/// the parent matrix. Every surviving off-diagonal entry exceeds the split
/// tolerance, so the block is numerically irreducible.
#[derive(Clone, Debug)]
pub struct IrreducibleBlock {
    pub offset: usize,
    pub tridiag: Tridiagonal,
}

/// All solver tolerances plus the precision profile.
#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub profile: Profile,
    /// Relative-gap threshold for the singleton/cluster classification.
    pub gaptol: f64,
    /// Multiplier on `eps_work * sqrt(n) * ||T||_1` in the split criterion.
    pub split_tol_factor: f64,
    /// Magnitude bound of the random relative perturbation of the root.
    pub perturb_magnitude: f64,
    /// RQI residual coefficient: accept when the residual is below
    /// `rqi_tol1 * n * eps_work * gap` (classic) or
    /// `rqi_tol1 * sqrt(n) * eps_out * gap` (relaxed).
    pub rqi_tol1: f64,
    /// RQI correction coefficient: accept when `|gamma_r|/||z||^2` is below
    /// `rqi_tol2 * eps_work * |lambda|`.
    pub rqi_tol2: f64,
    /// Relative tolerance of classification-accuracy bisection.
    pub bisect_rtol_classify: f64,
    /// Relative tolerance of full-accuracy bisection.
    pub bisect_rtol_full: f64,
    /// Element-growth acceptance threshold for new representations; clamped
    /// to the profile's relaxed element-growth bound.
    pub growth_threshold: f64,
    /// Backoff attempts when selecting a cluster shift.
    pub max_shift_attempts: usize,
    /// Apply one extra Rayleigh quotient correction after acceptance.
    pub apply_final_rqc: bool,
    pub worker_count: usize,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(profile: Profile) -> Self {
        Self {
            profile,
            gaptol: profile.gaptol,
            split_tol_factor: 1.0,
            perturb_magnitude: profile.perturb,
            rqi_tol1: 1.0,
            rqi_tol2: 4.0,
            bisect_rtol_classify: 1e-2 * profile.gaptol,
            bisect_rtol_full: 4.0 * EPS_WORK,
            growth_threshold: 64.0,
            max_shift_attempts: 6,
            apply_final_rqc: false,
            worker_count: 1,
            seed: 0,
        }
    }

    pub fn standard64() -> Self {
        Self::new(profile::standard64())
    }

    pub fn mixed32in64(n: usize) -> Result<Self, Error> {
        Ok(Self::new(profile::mixed32in64(n)?))
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.worker_count = workers.max(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Effective element-growth threshold for a block of size `n`.
    pub fn effective_growth_threshold(&self, n: usize) -> f64 {
        self.growth_threshold.min(self.profile.k_elg_bound(n))
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.gaptol > 0.0 && self.gaptol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gaptol must lie in (0, 1), got {}",
                self.gaptol
            )));
        }
        if self.worker_count < 1 {
            return Err(Error::InvalidArgument("worker_count must be >= 1".into()));
        }
        if self.max_shift_attempts < 1 {
            return Err(Error::InvalidArgument("max_shift_attempts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Split `t` into numerically irreducible blocks: an off-diagonal entry is
/// treated as zero exactly when
/// `|beta_i| <= split_tol_factor * eps_work * sqrt(n) * ||T||_1`,
/// with `n` and the norm taken from the unreduced input.
pub fn split(t: &Tridiagonal, cfg: &SolverConfig) -> Vec<IrreducibleBlock> {
    let n = t.n();
    let tol = cfg.split_tol_factor * EPS_WORK * (n as f64).sqrt() * t.one_norm();
    let mut blocks = Vec::new();
    let mut start = 0usize;
    for i in 0..n - 1 {
        if t.beta[i].abs() <= tol {
            blocks.push(block_of(t, start, i + 1));
            start = i + 1;
        }
    }
    blocks.push(block_of(t, start, n));
    blocks
}

fn block_of(t: &Tridiagonal, start: usize, end: usize) -> IrreducibleBlock {
    IrreducibleBlock {
        offset: start,
        tridiag: Tridiagonal {
            alpha: t.alpha[start..end].to_vec(),
            beta: t.beta[start..end.saturating_sub(1).max(start)].to_vec(),
        },
    }
}

/// Gershgorin interval containing every eigenvalue of `t`, inflated by
/// `(2n + 10) * max(|g_l|, |g_u|) * eps_work` to absorb roundoff.
pub fn gershgorin(t: &Tridiagonal) -> Interval {
    let n = t.n();
    let a = &t.alpha;
    let b = &t.beta;
    let (mut gl, mut gu);
    if n == 1 {
        gl = a[0];
        gu = a[0];
    } else {
        gl = a[0] - b[0].abs();
        gu = a[0] + b[0].abs();
        for i in 1..n - 1 {
            let r = b[i - 1].abs() + b[i].abs();
            gl = gl.min(a[i] - r);
            gu = gu.max(a[i] + r);
        }
        gl = gl.min(a[n - 1] - b[n - 2].abs());
        gu = gu.max(a[n - 1] + b[n - 2].abs());
    }
    let bnorm = gl.abs().max(gu.abs());
    let infl = (2 * n + 10) as f64 * bnorm * EPS_WORK;
    Interval::new(gl - infl, gu + infl)
}

/// Safe range for the 1-norm: fourth roots of the underflow and overflow
/// thresholds of the working format.
const SAFE_MIN: f64 = 1.2213386697554703e-77; // MIN_POSITIVE^(1/4)
const SAFE_MAX: f64 = 1.157920892373162e77; // MAX^(1/4)

/// Decide a power-of-two scaling bringing `||T||_1` into the safe range.
/// Returns `None` when no scaling is needed. Eigenvalues of the scaled
/// matrix must be divided by the returned factor on output; the factor is a
/// power of two, so the rescaling is exact.
pub fn safe_scale(t: &Tridiagonal) -> Option<(Tridiagonal, f64)> {
    let nrm = t.one_norm();
    if nrm == 0.0 || (SAFE_MIN..=SAFE_MAX).contains(&nrm) {
        return None;
    }
    let target_exp = if nrm < SAFE_MIN {
        (SAFE_MIN / nrm).log2().ceil()
    } else {
        -(nrm / SAFE_MAX).log2().ceil()
    };
    let s = 2f64.powi(target_exp as i32);
    Some((t.scaled(s), s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::EPS_WORK;

    fn tri(alpha: &[f64], beta: &[f64]) -> Tridiagonal {
        Tridiagonal::new(alpha.to_vec(), beta.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tridiagonal::new(vec![], vec![]).is_err());
        assert!(Tridiagonal::new(vec![1.0], vec![1.0]).is_err());
        assert!(Tridiagonal::new(vec![1.0, f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn split_at_exact_zero() {
        let t = tri(&[1.0, 2.0, 3.0], &[0.0, 1.0]);
        let cfg = SolverConfig::standard64();
        let blocks = split(&t, &cfg);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].offset, 0);
        assert_eq!(blocks[0].tridiag.n(), 1);
        assert_eq!(blocks[1].offset, 1);
        assert_eq!(blocks[1].tridiag.n(), 2);
        assert_eq!(blocks[1].tridiag.beta(), &[1.0]);
    }

    #[test]
    fn split_keeps_solid_matrix_whole() {
        let t = tri(&[2.0, 2.0, 2.0], &[1.0, 1.0]);
        let cfg = SolverConfig::standard64();
        let blocks = split(&t, &cfg);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].tridiag, t);
    }

    #[test]
    fn split_on_tiny_entry() {
        // |beta| = 1e-30 is under eps*sqrt(4)*||T||_1 ~ 4.4e-16.
        let t = tri(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1e-30, 1.0]);
        let cfg = SolverConfig::standard64();
        let blocks = split(&t, &cfg);
        assert_eq!(blocks.len(), 2);
        assert_eq!((blocks[0].tridiag.n(), blocks[1].tridiag.n()), (2, 2));
        assert_eq!(blocks[1].offset, 2);
    }

    #[test]
    fn split_is_idempotent() {
        let t = tri(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1e-30, 1.0]);
        let cfg = SolverConfig::standard64();
        for b in split(&t, &cfg) {
            let again = split(&b.tridiag, &cfg);
            assert_eq!(again.len(), 1);
            assert_eq!(again[0].tridiag, b.tridiag);
        }
    }

    #[test]
    fn one_norm_values() {
        assert_eq!(tri(&[2.0, 2.0, 2.0], &[1.0, 1.0]).one_norm(), 4.0);
        assert_eq!(tri(&[-7.0], &[]).one_norm(), 7.0);
        // Wilkinson n=5: column sums (3,3,2,3,3).
        assert_eq!(tri(&[2.0, 1.0, 0.0, 1.0, 2.0], &[1.0, 1.0, 1.0, 1.0]).one_norm(), 3.0);
    }

    #[test]
    fn one_norm_dominates_diagonal() {
        let t = tri(&[3.0, -9.0, 0.5], &[0.25, -2.0]);
        let dmax = t.alpha().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(t.one_norm() >= dmax);
    }

    #[test]
    fn gershgorin_inflation() {
        let t = tri(&[2.0, 2.0, 2.0], &[1.0, 1.0]);
        let g = gershgorin(&t);
        let infl = 16.0 * 4.0 * EPS_WORK;
        assert_eq!(g.lo, 0.0 - infl);
        assert_eq!(g.hi, 4.0 + infl);
    }

    #[test]
    fn gershgorin_singleton() {
        let g = gershgorin(&tri(&[5.0], &[]));
        assert_eq!(g.lo, 5.0 - 12.0 * 5.0 * EPS_WORK);
        assert_eq!(g.hi, 5.0 + 12.0 * 5.0 * EPS_WORK);
    }

    #[test]
    fn gershgorin_clement4() {
        // Clement n=4: beta = (sqrt(3), 2, sqrt(3)); base interval
        // +/- (sqrt(3) + 2).
        let s3 = 3f64.sqrt();
        let t = tri(&[0.0; 4], &[s3, 2.0, s3]);
        let g = gershgorin(&t);
        let base = s3 + 2.0;
        let infl = 18.0 * base * EPS_WORK;
        assert!((g.lo + base + infl).abs() <= 1e-15);
        assert!((g.hi - base - infl).abs() <= 1e-15);
    }

    #[test]
    fn scaling_round_trip() {
        let t = tri(&[1e100, 2e100], &[1e99]);
        let (scaled, s) = safe_scale(&t).expect("should scale");
        assert!(s < 1.0 && s.log2().fract() == 0.0);
        let nrm = scaled.one_norm();
        assert!((SAFE_MIN..=SAFE_MAX).contains(&nrm));
        // Power-of-two scaling is exact entrywise.
        assert_eq!(scaled.alpha()[0] / s, 1e100);
        assert!(safe_scale(&tri(&[1.0, 2.0], &[0.5])).is_none());
    }
}
