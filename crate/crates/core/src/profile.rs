//! Precision profiles.
//!
//! Both profiles carry out all internal arithmetic in binary64; they differ
//! in the output format and in the parameter law derived from it. The mixed
//! single/double profile rounds eigenvectors to binary32 on output and in
//! exchange may use a much smaller `gaptol`, an aggressive random
//! perturbation of the root representation, and a relaxed Rayleigh quotient
//! stopping criterion.

use crate::{Error, EPS_SINGLE, EPS_WORK};

/// Stopping rule used by the Rayleigh quotient iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RqiMode {
    /// Residual below `tol1 * n * eps_work * gap`.
    Classic,
    /// Residual below `tol1 * sqrt(n) * eps_out * gap`.
    Relaxed,
}

/// Output precision of eigenvector data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputPrecision {
    F64,
    F32,
}

/// A precision profile: output/working unit roundoffs plus the parameters
/// derived from them.
#[derive(Clone, Copy, Debug)]
pub struct Profile {
    /// Unit roundoff of the output format.
    pub eps_out: f64,
    /// Unit roundoff of the working format.
    pub eps_work: f64,
    /// Relative-gap threshold separating singletons from clusters.
    pub gaptol: f64,
    /// Magnitude bound for the random relative perturbation of the root.
    pub perturb: f64,
    pub rqi_mode: RqiMode,
    pub output: OutputPrecision,
}

/// A vector in output precision.
#[derive(Clone, Debug)]
pub enum OutVector {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

impl OutVector {
    pub fn len(&self) -> usize {
        match self {
            OutVector::F64(v) => v.len(),
            OutVector::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entry as f64, whatever the storage format.
    pub fn get(&self, i: usize) -> f64 {
        match self {
            OutVector::F64(v) => v[i],
            OutVector::F32(v) => v[i] as f64,
        }
    }
}

/// The plain double-precision profile.
pub fn standard64() -> Profile {
    Profile {
        eps_out: EPS_WORK,
        eps_work: EPS_WORK,
        gaptol: 1e-3,
        perturb: 8.0 * EPS_WORK,
        rqi_mode: RqiMode::Classic,
        output: OutputPrecision::F64,
    }
}

/// The single/double mixed-precision profile.
///
/// Rejects matrix sizes for which the gaptol interval
/// `min(1e-3, eps_work*sqrt(n)/eps_out) <= gaptol <= 1e-3` cannot hold with
/// the fixed `gaptol = 1e-5`, or for which `n*eps_work > eps_out*sqrt(n)`.
/// Both bounds sit far beyond any practical size.
pub fn mixed32in64(n: usize) -> Result<Profile, Error> {
    let gaptol = 1e-5;
    let sqrt_n = (n as f64).sqrt();
    if n as f64 * EPS_WORK > EPS_SINGLE * sqrt_n {
        return Err(Error::InvalidArgument(format!(
            "n = {n} too large for the single/double profile (n*eps_work > eps_out*sqrt(n))"
        )));
    }
    if gaptol_lower_bound(n) > gaptol {
        return Err(Error::InvalidArgument(format!(
            "n = {n} violates the gaptol interval lower bound for gaptol = {gaptol}"
        )));
    }
    Ok(Profile {
        eps_out: EPS_SINGLE,
        eps_work: EPS_WORK,
        gaptol,
        perturb: EPS_SINGLE,
        rqi_mode: RqiMode::Relaxed,
        output: OutputPrecision::F32,
    })
}

/// Lower end of the admissible gaptol interval for the mixed profile,
/// `min(1e-3, eps_work*sqrt(n)/eps_out)`.
pub fn gaptol_lower_bound(n: usize) -> f64 {
    (EPS_WORK * (n as f64).sqrt() / EPS_SINGLE).min(1e-3)
}

impl Profile {
    /// Relaxed element-growth constant available to this profile,
    /// `max(10, eps_out/(eps_work*sqrt(n)))`. Diagnostic; the shift engine
    /// clamps its growth threshold to this bound.
    pub fn k_elg_bound(&self, n: usize) -> f64 {
        (self.eps_out / (self.eps_work * (n as f64).sqrt())).max(10.0)
    }

    /// Relaxed relative-robustness constant,
    /// `max(10, eps_out/(eps_work*sqrt(n)) * gaptol)`. Diagnostic only.
    pub fn k_rr_bound(&self, n: usize) -> f64 {
        (self.eps_out / (self.eps_work * (n as f64).sqrt()) * self.gaptol).max(10.0)
    }

    /// Round a working-precision unit vector to the output format and
    /// renormalize there, keeping the 2-norm within a couple of output
    /// roundoffs of one.
    pub fn convert_out(&self, v: &[f64]) -> OutVector {
        match self.output {
            OutputPrecision::F64 => OutVector::F64(v.to_vec()),
            OutputPrecision::F32 => {
                let mut w: Vec<f32> = v.iter().map(|&x| x as f32).collect();
                let nrm = w.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
                // Rounding a unit vector keeps the norm within 2 eps_out;
                // dividing anyway would only add rounding noise.
                if nrm > 0.0 && (nrm - 1.0).abs() > 2.0 * EPS_SINGLE {
                    for x in &mut w {
                        *x = ((*x as f64) / nrm) as f32;
                    }
                }
                OutVector::F32(w)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self.output {
            OutputPrecision::F64 => "std64",
            OutputPrecision::F32 => "mixed32",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard64_parameters() {
        let p = standard64();
        assert_eq!(p.eps_out, 2f64.powi(-53));
        assert_eq!(p.eps_work, 2f64.powi(-53));
        assert_eq!(p.gaptol, 1e-3);
        assert_eq!(p.perturb, 8.0 * 2f64.powi(-53));
        assert_eq!(p.rqi_mode, RqiMode::Classic);
    }

    #[test]
    fn mixed_parameters_and_bounds() {
        let p = mixed32in64(10_000).unwrap();
        assert_eq!(p.eps_out, 2f64.powi(-24));
        assert_eq!(p.eps_work, 2f64.powi(-53));
        assert_eq!(p.gaptol, 1e-5);
        assert_eq!(p.perturb, 2f64.powi(-24));
        assert_eq!(p.rqi_mode, RqiMode::Relaxed);
        // n = 10^4: interval lower bound is ~2e-7, well under 1e-5.
        let lb = gaptol_lower_bound(10_000);
        assert!(lb <= 1e-5 && 1e-5 <= 1e-3, "lower bound {lb}");
    }

    #[test]
    fn mixed_accepts_all_practical_sizes() {
        for n in [1usize, 2, 101, 2001, 1_000_000] {
            assert!(mixed32in64(n).is_ok(), "n = {n}");
        }
    }

    #[test]
    fn convert_out_unit_basis_is_exact() {
        let p = mixed32in64(8).unwrap();
        let mut e3 = vec![0.0; 8];
        e3[3] = 1.0;
        match p.convert_out(&e3) {
            OutVector::F32(w) => {
                for (i, &x) in w.iter().enumerate() {
                    assert_eq!(x, if i == 3 { 1.0 } else { 0.0 });
                }
            }
            _ => panic!("wrong precision"),
        }
    }

    #[test]
    fn convert_out_representable_values_identical() {
        let p = mixed32in64(4).unwrap();
        // Values exactly representable in binary32 and unit norm: (0.6, 0.8)
        // is not exact in binary; use halves instead.
        let v = vec![0.5, -0.5, 0.5, 0.5];
        match p.convert_out(&v) {
            OutVector::F32(w) => assert_eq!(w, vec![0.5f32, -0.5, 0.5, 0.5]),
            _ => panic!("wrong precision"),
        }
    }

    #[test]
    fn convert_out_norm_drift() {
        let p = mixed32in64(1000).unwrap();
        // Deterministic pseudo-random unit vector.
        let mut v: Vec<f64> = (0..1000)
            .map(|i| ((i * 2654435761usize % 1000) as f64 / 999.0) - 0.5)
            .collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= nrm);
        let w = p.convert_out(&v);
        let s: f64 = (0..w.len()).map(|i| w.get(i) * w.get(i)).sum();
        let drift = (s.sqrt() - 1.0).abs();
        assert!(drift <= 4.0 * EPS_SINGLE, "norm drift {drift}");
    }

    #[test]
    fn growth_bound_covers_defaults() {
        let std = standard64();
        assert_eq!(std.k_elg_bound(100), 10.0);
        let mix = mixed32in64(2001).unwrap();
        assert!(mix.k_elg_bound(2001) > 64.0);
    }
}
