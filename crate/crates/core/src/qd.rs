//! Differential stationary and progressive qd transforms with shift, and
//! twisted-factorization assembly.
//!
//! A `Representation` stores the nontrivial entries of a lower bidiagonal
//! factorization `L D L*` together with the shift accumulated from the
//! original matrix. The transforms rely on IEEE arithmetic: infinities
//! propagate through the recurrences harmlessly (with one guard for the
//! inf/inf case), while NaN in the pivot output signals that the shifted
//! factorization does not exist.

use std::sync::atomic::AtomicUsize;

use crate::Error;

/// N-representation of `L D L*` with accumulated shift. The auxiliary
/// arrays `dl = d[i]*l[i]` and `dll = d[i]*l[i]^2` are cached because every
/// transform and eigenvalue count consumes them.
#[derive(Debug)]
pub struct Representation {
    d: Vec<f64>,
    l: Vec<f64>,
    dl: Vec<f64>,
    dll: Vec<f64>,
    /// Shift relative to the original unsplit matrix, so restoring an
    /// eigenvalue is a single addition.
    pub shift_accum: f64,
    /// Depth of this node in the representation tree (root = 0).
    pub depth: usize,
    /// Number of live tasks still reading this representation.
    pub dependents: AtomicUsize,
}

impl Representation {
    /// Build from factor data, verifying every entry is numerical.
    pub fn from_factors(d: Vec<f64>, l: Vec<f64>, shift_accum: f64, depth: usize) -> Result<Self, Error> {
        if d.is_empty() || l.len() + 1 != d.len() {
            return Err(Error::InvalidArgument("factor lengths".into()));
        }
        if !d.iter().chain(l.iter()).all(|x| x.is_finite()) {
            return Err(Error::FactorizationFailure);
        }
        let dl: Vec<f64> = (0..l.len()).map(|i| d[i] * l[i]).collect();
        let dll: Vec<f64> = (0..l.len()).map(|i| dl[i] * l[i]).collect();
        Ok(Self { d, l, dl, dll, shift_accum, depth, dependents: AtomicUsize::new(0) })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn dl(&self) -> &[f64] {
        &self.dl
    }

    pub fn dll(&self) -> &[f64] {
        &self.dll
    }

    /// Largest pivot magnitude, the element-growth numerator.
    pub fn max_abs_d(&self) -> f64 {
        self.d.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Multiply the factorization back into tridiagonal entries
    /// (diagonal, off-diagonal). Test and diagnostic aid.
    pub fn to_tridiagonal_entries(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n.saturating_sub(1)];
        alpha[0] = self.d[0];
        for i in 0..n - 1 {
            beta[i] = self.dl[i];
            alpha[i + 1] = self.d[i + 1] + self.dll[i];
        }
        (alpha, beta)
    }
}

/// Output of the stationary transform: `L+ D+ L+* = L D L* - tau I`.
#[derive(Clone, Debug)]
pub struct Stationary {
    pub dplus: Vec<f64>,
    pub lplus: Vec<f64>,
    pub s: Vec<f64>,
}

/// Output of the progressive transform: `U- Om- U-* = L D L* - tau I`.
#[derive(Clone, Debug)]
pub struct Progressive {
    pub omega_minus: Vec<f64>,
    pub uminus: Vec<f64>,
    pub p: Vec<f64>,
}

/// Twisted-factorization data for one shift: both one-sided transforms plus
/// the twist pivots `gamma_k` and the chosen twist index `r` (0-based).
#[derive(Clone, Debug)]
pub struct TwistData {
    pub stationary: Stationary,
    pub progressive: Progressive,
    pub gamma: Vec<f64>,
    pub r: usize,
}

pub(crate) fn dstqds_raw(rep: &Representation, tau: f64) -> Stationary {
    let n = rep.n();
    let d = &rep.d;
    let dl = &rep.dl;
    let dll = &rep.dll;
    let mut dplus = vec![0.0; n];
    let mut lplus = vec![0.0; n.saturating_sub(1)];
    let mut s = vec![0.0; n];
    s[0] = -tau;
    for i in 0..n - 1 {
        dplus[i] = s[i] + d[i];
        let q = if s[i].abs() == f64::INFINITY && dplus[i].abs() == f64::INFINITY {
            1.0
        } else {
            s[i] / dplus[i]
        };
        lplus[i] = dl[i] / dplus[i];
        s[i + 1] = q * dll[i] - tau;
    }
    dplus[n - 1] = s[n - 1] + d[n - 1];
    Stationary { dplus, lplus, s }
}

pub(crate) fn dqds_raw(rep: &Representation, tau: f64) -> Progressive {
    let n = rep.n();
    let d = &rep.d;
    let dl = &rep.dl;
    let dll = &rep.dll;
    let mut omega = vec![0.0; n];
    let mut uminus = vec![0.0; n.saturating_sub(1)];
    let mut p = vec![0.0; n];
    p[n - 1] = d[n - 1] - tau;
    for i in (0..n - 1).rev() {
        omega[i + 1] = p[i + 1] + dll[i];
        let q = if p[i + 1].abs() == f64::INFINITY && omega[i + 1].abs() == f64::INFINITY {
            1.0
        } else {
            p[i + 1] / omega[i + 1]
        };
        uminus[i] = dl[i] / omega[i + 1];
        p[i] = q * d[i] - tau;
    }
    omega[0] = p[0];
    Progressive { omega_minus: omega, uminus, p }
}

/// Stationary qd transform with shift. Fails when any pivot becomes NaN;
/// infinite pivots alone are legitimate IEEE intermediate states.
pub fn dstqds(rep: &Representation, tau: f64) -> Result<Stationary, Error> {
    let out = dstqds_raw(rep, tau);
    if out.dplus.iter().any(|x| x.is_nan()) {
        return Err(Error::FactorizationFailure);
    }
    Ok(out)
}

/// Progressive qd transform with shift; mirror of [`dstqds`].
pub fn dqds(rep: &Representation, tau: f64) -> Result<Progressive, Error> {
    let out = dqds_raw(rep, tau);
    if out.omega_minus.iter().any(|x| x.is_nan()) {
        return Err(Error::FactorizationFailure);
    }
    Ok(out)
}

/// Run both transforms at shift `lambda_hat` and assemble the twist pivots
/// `gamma_k`, choosing `r = argmin |gamma_k|` with NaN entries excluded and
/// ties broken toward the smallest index.
pub fn compute_gammas(rep: &Representation, lambda_hat: f64) -> Result<TwistData, Error> {
    if !lambda_hat.is_finite() {
        return Err(Error::InvalidArgument("shift must be finite".into()));
    }
    let stationary = dstqds_raw(rep, lambda_hat);
    let progressive = dqds_raw(rep, lambda_hat);
    let gamma = assemble_gammas(rep, &stationary, &progressive);
    let r = argmin_abs(&gamma).ok_or(Error::TwistFailure)?;
    Ok(TwistData { stationary, progressive, gamma, r })
}

pub(crate) fn assemble_gammas(rep: &Representation, st: &Stationary, pr: &Progressive) -> Vec<f64> {
    let n = rep.n();
    let mut gamma = vec![0.0; n];
    for k in 0..n - 1 {
        gamma[k] = st.s[k] + rep.d[k] / pr.omega_minus[k + 1] * pr.p[k + 1];
    }
    gamma[n - 1] = st.s[n - 1] + rep.d[n - 1];
    gamma
}

pub(crate) fn argmin_abs(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        let a = x.abs();
        if a.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if a >= b => {}
            _ => best = Some((i, a)),
        }
    }
    best.map(|(i, _)| i)
}

/// New representation of `L D L* - tau I` at depth + 1. The accumulated
/// shift keeps tracking the original matrix.
pub fn shift_representation(rep: &Representation, tau: f64) -> Result<Representation, Error> {
    let st = dstqds(rep, tau)?;
    Representation::from_factors(st.dplus, st.lplus, rep.shift_accum + tau, rep.depth + 1)
}
