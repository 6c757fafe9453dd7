//! Eigenvalue counting via Sylvester inertia and bisection to prescribed
//! relative accuracy.
//!
//! The counts use the sign-bit convention `SignBit(-0) = 1`, `SignBit(+0) = 0`
//! so a pivot that is exactly zero still yields the correct count, and IEEE
//! infinity propagation replaces pivot guards.

use crate::qd::Representation;
use crate::tridiag::{Interval, Tridiagonal};
use crate::BISECT_ATOL;

/// Number of eigenvalues of `t` strictly below `sigma`.
///
/// Assumes the matrix has been scaled so `beta_i^2` does not underflow
/// (guaranteed for split blocks of a safely scaled matrix).
pub fn negcount_t(t: &Tridiagonal, sigma: f64) -> usize {
    let a = t.alpha();
    let b = t.beta();
    let mut count = 0usize;
    let mut d = a[0] - sigma;
    count += d.is_sign_negative() as usize;
    for i in 1..a.len() {
        d = (a[i] - sigma) - b[i - 1] * b[i - 1] / d;
        count += d.is_sign_negative() as usize;
    }
    count
}

/// Reusable Sturm counter for a plain tridiagonal with the squared
/// off-diagonals precomputed.
pub struct SturmT {
    alpha: Vec<f64>,
    beta_sq: Vec<f64>,
}

impl SturmT {
    pub fn new(t: &Tridiagonal) -> Self {
        Self {
            alpha: t.alpha().to_vec(),
            beta_sq: t.beta().iter().map(|b| b * b).collect(),
        }
    }

    pub fn negcount(&self, sigma: f64) -> usize {
        let mut count = 0usize;
        let mut d = self.alpha[0] - sigma;
        count += d.is_sign_negative() as usize;
        for i in 1..self.alpha.len() {
            d = (self.alpha[i] - sigma) - self.beta_sq[i - 1] / d;
            count += d.is_sign_negative() as usize;
        }
        count
    }
}

/// Number of eigenvalues of the represented `L D L*` strictly below `sigma`,
/// from the inertia of the shifted factorization.
pub fn negcount_ldl(rep: &Representation, sigma: f64) -> usize {
    let n = rep.n();
    let d = rep.d();
    let dll = rep.dll();
    let mut count = 0usize;
    let mut s = -sigma;
    for i in 0..n - 1 {
        let dplus = d[i] + s;
        let q = if s.abs() == f64::INFINITY && dplus.abs() == f64::INFINITY {
            1.0
        } else {
            s / dplus
        };
        s = q * dll[i] - sigma;
        count += dplus.is_sign_negative() as usize;
    }
    let dplus = d[n - 1] + s;
    count + dplus.is_sign_negative() as usize
}

/// Bisect until the interval around the `k`-th eigenvalue (1-based) is
/// smaller than `rtol * max(|lo|, |hi|)` or smaller than `atol`.
///
/// `counter(x)` must return the number of eigenvalues strictly below `x`.
/// If the bracket hypothesis `counter(lo) < k <= counter(hi)` does not hold,
/// the interval is inflated geometrically until it does.
pub fn bisect<F: FnMut(f64) -> usize>(
    mut counter: F,
    k: usize,
    start: Interval,
    rtol: f64,
    atol: f64,
) -> Interval {
    let mut lo = start.lo;
    let mut hi = start.hi;
    let mut step = (hi - lo).max(lo.abs().max(hi.abs()) * 1e-3).max(f64::MIN_POSITIVE);
    while counter(lo) >= k {
        lo -= step;
        step *= 2.0;
    }
    let mut step = (hi - lo).max(lo.abs().max(hi.abs()) * 1e-3).max(f64::MIN_POSITIVE);
    while counter(hi) < k {
        hi += step;
        step *= 2.0;
    }
    loop {
        let width = hi - lo;
        if width <= rtol * lo.abs().max(hi.abs()) || width <= atol {
            break;
        }
        let mid = lo + width / 2.0;
        if mid <= lo || mid >= hi {
            break; // interval already at ulp resolution
        }
        if counter(mid) < k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Interval::new(lo, hi)
}

/// Default absolute tolerance: twice the underflow threshold.
pub fn default_atol() -> f64 {
    BISECT_ATOL
}

/// Interval inflation safety factor used when carrying eigenvalue brackets
/// from a parent representation to a shifted child: nu = 10 * k_rr * n * eps
/// with k_rr = 10.
pub fn carry_inflation(n: usize) -> f64 {
    100.0 * n as f64 * crate::EPS_WORK
}

/// Refinement outcome plus a diagnostic count of bracket repairs.
pub struct Refined {
    pub intervals: Vec<Interval>,
    pub bracket_repairs: usize,
}

/// Refine eigenvalue brackets carried from the parent of `rep`.
///
/// `intervals[i]` brackets the eigenvalue with 1-based index `indices[i]` of
/// the parent matrix; `rep` represents `parent - tau*I`. Each interval is
/// shifted by `-tau`, inflated multiplicatively by [`carry_inflation`] with
/// the signs chosen to enlarge, then bisected to `rtol` using
/// [`negcount_ldl`]. If inflation was insufficient the bracket is repaired
/// by repeated doubling (bounded) and the repair is reported.
pub fn refine_all(
    rep: &Representation,
    indices: &[usize],
    intervals: &[Interval],
    tau: f64,
    rtol: f64,
) -> Refined {
    debug_assert_eq!(indices.len(), intervals.len());
    let nu = carry_inflation(rep.n());
    let mut out = Vec::with_capacity(intervals.len());
    let mut repairs = 0usize;
    for (&k, iv) in indices.iter().zip(intervals) {
        let mut lo = (iv.lo - nu * iv.lo.abs() - tau) * 1.0;
        let mut hi = (iv.hi + nu * iv.hi.abs() - tau) * 1.0;
        lo -= nu * lo.abs();
        hi += nu * hi.abs();
        // Bracket repair: inflate again, bounded, before handing the
        // interval to bisection (which would also recover, but silently).
        let mut extra = nu.max(crate::EPS_WORK);
        let mut tries = 0;
        while tries < 8 && negcount_ldl(rep, lo) >= k {
            lo -= extra * lo.abs().max(1.0);
            extra *= 2.0;
            repairs += 1;
            tries += 1;
        }
        let mut extra = nu.max(crate::EPS_WORK);
        let mut tries = 0;
        while tries < 8 && negcount_ldl(rep, hi) < k {
            hi += extra * hi.abs().max(1.0);
            extra *= 2.0;
            repairs += 1;
            tries += 1;
        }
        out.push(bisect(
            |x| negcount_ldl(rep, x),
            k,
            Interval::new(lo, hi.max(lo)),
            rtol,
            default_atol(),
        ));
    }
    Refined { intervals: out, bracket_repairs: repairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qd::Representation;
    use crate::tridiag::{gershgorin, Tridiagonal};

    fn tri(alpha: &[f64], beta: &[f64]) -> Tridiagonal {
        Tridiagonal::new(alpha.to_vec(), beta.to_vec()).unwrap()
    }

    fn rep(d: &[f64], l: &[f64]) -> Representation {
        Representation::from_factors(d.to_vec(), l.to_vec(), 0.0, 0).unwrap()
    }

    fn one21(n: usize) -> Tridiagonal {
        tri(&vec![2.0; n], &vec![1.0; n - 1])
    }

    fn clement(n: usize) -> Tridiagonal {
        let beta: Vec<f64> = (1..n).map(|k| ((k * (n - k)) as f64).sqrt()).collect();
        tri(&vec![0.0; n], &beta)
    }

    #[test]
    fn negcount_t_one21() {
        // Eigenvalues of the n=3 matrix: 2 - sqrt(2), 2, 2 + sqrt(2).
        assert_eq!(negcount_t(&one21(3), 2.0), 1);
        assert_eq!(negcount_t(&one21(3), 0.0), 0);
        assert_eq!(negcount_t(&one21(3), 5.0), 3);
    }

    #[test]
    fn negcount_t_below_gershgorin_is_zero() {
        for t in [one21(5), clement(6), tri(&[1.0, -4.0, 9.0], &[2.0, 0.5])] {
            let g = gershgorin(&t);
            assert_eq!(negcount_t(&t, g.lo), 0);
            assert_eq!(negcount_t(&t, g.hi), t.n());
        }
    }

    #[test]
    fn negcount_t_clement4() {
        // Spectrum {-3, -1, 1, 3}.
        assert_eq!(negcount_t(&clement(4), 0.0), 2);
    }

    #[test]
    fn sturm_t_matches_negcount() {
        let t = clement(9);
        let s = SturmT::new(&t);
        for sigma in [-10.0, -1.5, 0.0, 0.1, 3.9, 10.0] {
            assert_eq!(s.negcount(sigma), negcount_t(&t, sigma));
        }
    }

    #[test]
    fn negcount_ldl_diagonal() {
        assert_eq!(negcount_ldl(&rep(&[1.0, 2.0, 3.0], &[0.0, 0.0]), 2.5), 2);
        assert_eq!(negcount_ldl(&rep(&[1.0, -1.0], &[0.0]), 0.0), 1);
    }

    #[test]
    fn negcount_ldl_two_by_two() {
        // L D L* = [[1, 1], [1, 2]], eigenvalues (3 +/- sqrt(5)) / 2 > 0.
        assert_eq!(negcount_ldl(&rep(&[1.0, 1.0], &[1.0]), 0.0), 0);
    }

    #[test]
    fn negcount_agreement_t_vs_ldl() {
        // Factor the 1-2-1 matrix at shift 0 by hand: d1=2, l1=1/2, ...
        let t = one21(4);
        let mut d = vec![0.0; 4];
        let mut l = vec![0.0; 3];
        d[0] = t.alpha()[0];
        for i in 0..3 {
            l[i] = t.beta()[i] / d[i];
            d[i + 1] = t.alpha()[i + 1] - l[i] * t.beta()[i];
        }
        let r = rep(&d, &l);
        for sigma in [-1.0, 0.7, 1.9, 2.0, 3.3, 4.5] {
            assert_eq!(negcount_ldl(&r, sigma), negcount_t(&t, sigma), "sigma = {sigma}");
        }
    }

    #[test]
    fn bisect_one21_first_eigenvalue() {
        let t = one21(3);
        let g = gershgorin(&t);
        let iv = bisect(|x| negcount_t(&t, x), 1, g, 1e-8, default_atol());
        let want = 2.0 - 2f64.sqrt();
        assert!((iv.mid() - want).abs() <= 1e-8 * want + iv.half_width());
        assert!(iv.half_width() <= 1e-8 * want);
    }

    #[test]
    fn bisect_diagonal_middle() {
        let t = tri(&[1.0, 2.0, 3.0], &[0.0, 0.0]);
        let g = gershgorin(&t);
        let iv = bisect(|x| negcount_t(&t, x), 2, g, 1e-12, default_atol());
        assert!((iv.mid() - 2.0).abs() <= 1e-11);
    }

    #[test]
    fn bisect_clement_zero_eigenvalue() {
        // Odd-size Clement matrix has the eigenvalue 0 exactly; only the
        // absolute tolerance can stop the iteration there.
        let t = clement(5);
        let g = gershgorin(&t);
        let iv = bisect(|x| negcount_t(&t, x), 3, g, 1e-10, default_atol());
        assert!(iv.lo <= 0.0 && 0.0 <= iv.hi);
        assert!(iv.width() <= 1e-300, "width {}", iv.width());
    }

    #[test]
    fn bisect_repairs_bad_bracket() {
        let t = tri(&[1.0, 2.0, 3.0], &[0.0, 0.0]);
        let iv = bisect(|x| negcount_t(&t, x), 1, Interval::new(2.5, 2.6), 1e-10, default_atol());
        assert!((iv.mid() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn bisect_iteration_budget() {
        // Convergence is linear: at most ceil(log2(width0/atol)) + 2 steps.
        let t = one21(8);
        let g = gershgorin(&t);
        let mut calls = 0usize;
        let _ = bisect(
            |x| {
                calls += 1;
                negcount_t(&t, x)
            },
            3,
            g,
            1e-13,
            default_atol(),
        );
        let budget = ((g.width() / default_atol()).log2().ceil() as usize) + 2;
        // Two calls verify the bracket; the rest are bisection steps.
        assert!(calls - 2 <= budget, "calls = {calls}, budget = {budget}");
    }

    #[test]
    fn refine_all_diagonal_shift() {
        let r0 = rep(&[1.0, 2.0, 3.0], &[0.0, 0.0]);
        let shifted = crate::qd::shift_representation(&r0, 0.5).unwrap();
        let parent_ivs = [
            Interval::new(0.999, 1.001),
            Interval::new(1.999, 2.001),
            Interval::new(2.999, 3.001),
        ];
        let refined = refine_all(&shifted, &[1, 2, 3], &parent_ivs, 0.5, 1e-10);
        assert_eq!(refined.bracket_repairs, 0);
        for (iv, want) in refined.intervals.iter().zip([0.5, 1.5, 2.5]) {
            assert!((iv.mid() - want).abs() <= 1e-9, "mid {} want {want}", iv.mid());
        }
    }

    #[test]
    fn refine_never_widens_beyond_inflated_input() {
        let r0 = rep(&[1.0, 2.0], &[0.4]);
        let shifted = crate::qd::shift_representation(&r0, 0.0).unwrap();
        let iv = Interval::new(0.5, 1.2); // generous bracket of the lower eigenvalue
        let refined = refine_all(&shifted, &[1], &[iv], 0.0, 1.0);
        // rtol = 1 stops immediately: output no wider than the inflated input.
        let nu = carry_inflation(2);
        assert!(refined.intervals[0].width() <= iv.width() * (1.0 + 8.0 * nu) + 1e-12);
    }
}
