//! Plain-text matrix files and report serialization.
//!
//! Matrix format: line 1 holds the integer `n`, lines `2..n+1` the diagonal
//! entries, lines `n+2..2n` the off-diagonal entries, one decimal floating
//! point number per line. Writers emit 17 significant digits, which round
//! trips binary64 exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::metrics::QualityReport;
use crate::tridiag::Tridiagonal;
use crate::Error;

pub fn write_matrix(path: &Path, t: &Tridiagonal) -> Result<(), Error> {
    std::fs::write(path, matrix_to_string(t))?;
    Ok(())
}

pub fn matrix_to_string(t: &Tridiagonal) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", t.n());
    for a in t.alpha() {
        let _ = writeln!(s, "{a:.16e}");
    }
    for b in t.beta() {
        let _ = writeln!(s, "{b:.16e}");
    }
    s
}

pub fn read_matrix(path: &Path) -> Result<Tridiagonal, Error> {
    let text = std::fs::read_to_string(path)?;
    matrix_from_str(&text)
}

pub fn matrix_from_str(text: &str) -> Result<Tridiagonal, Error> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let n: usize = lines
        .next()
        .ok_or_else(|| Error::FileFormat("empty file".into()))?
        .parse()
        .map_err(|e| Error::FileFormat(format!("bad size line: {e}")))?;
    if n == 0 {
        return Err(Error::FileFormat("n must be at least 1".into()));
    }
    let mut parse = |what: &str| -> Result<f64, Error> {
        lines
            .next()
            .ok_or_else(|| Error::FileFormat(format!("missing {what} entry")))?
            .parse::<f64>()
            .map_err(|e| Error::FileFormat(format!("bad {what} entry: {e}")))
    };
    let alpha: Vec<f64> = (0..n).map(|_| parse("diagonal")).collect::<Result<_, _>>()?;
    let beta: Vec<f64> = (0..n - 1).map(|_| parse("off-diagonal")).collect::<Result<_, _>>()?;
    if lines.next().is_some() {
        return Err(Error::FileFormat("trailing data after matrix entries".into()));
    }
    Tridiagonal::new(alpha, beta)
}

/// Column order shared by the JSON objects and the CSV rows.
pub const REPORT_COLUMNS: [&str; 12] = [
    "n",
    "kind",
    "profile",
    "R",
    "O",
    "rho",
    "d_max",
    "phi_fail",
    "workers",
    "t_values_s",
    "t_vectors_s",
    "o_sampled",
];

pub fn report_to_json(report: &QualityReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization")
}

pub fn csv_header() -> String {
    REPORT_COLUMNS.join(",")
}

pub fn report_to_csv_row(r: &QualityReport) -> String {
    format!(
        "{},{},{},{:e},{:e},{:e},{},{},{},{:.6},{:.6},{}",
        r.n,
        r.kind,
        r.profile,
        r.r,
        r.o,
        r.rho,
        r.d_max,
        r.phi_fail,
        r.workers,
        r.t_values_s,
        r.t_vectors_s,
        r.o_sampled
    )
}

/// Dump eigenvector columns as text, one column per block of `n` lines,
/// matching the matrix entry format.
pub fn write_vectors(path: &Path, es: &crate::driver::EigenSystem) -> Result<(), Error> {
    let vectors = es
        .vectors
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("no vectors computed".into()))?;
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", vectors.n(), vectors.cols());
    for j in 0..vectors.cols() {
        for i in 0..vectors.n() {
            let _ = writeln!(s, "{:.16e}", vectors.get(i, j));
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_lossless() {
        let t = Tridiagonal::new(
            vec![std::f64::consts::PI, -1.0 / 3.0, 1e-300],
            vec![2f64.sqrt(), -7.125],
        )
        .unwrap();
        let s = matrix_to_string(&t);
        let back = matrix_from_str(&s).unwrap();
        assert_eq!(t.alpha(), back.alpha());
        assert_eq!(t.beta(), back.beta());
    }

    #[test]
    fn matrix_format_shape() {
        let t = Tridiagonal::new(vec![1.0, 2.0], vec![0.5]).unwrap();
        let s = matrix_to_string(&t);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "2");
    }

    #[test]
    fn single_entry_matrix_has_no_offdiagonal_lines() {
        let t = Tridiagonal::new(vec![5.0], vec![]).unwrap();
        let s = matrix_to_string(&t);
        assert_eq!(s.lines().count(), 2);
        let back = matrix_from_str(&s).unwrap();
        assert_eq!(back.n(), 1);
    }

    #[test]
    fn read_rejects_malformed_input() {
        assert!(matrix_from_str("").is_err());
        assert!(matrix_from_str("0\n").is_err());
        assert!(matrix_from_str("2\n1.0\n").is_err());
        assert!(matrix_from_str("2\n1.0\nx\n0.5\n").is_err());
        assert!(matrix_from_str("1\n1.0\n9.0\n").is_err());
    }

    #[test]
    fn csv_row_matches_header_arity() {
        let r = QualityReport {
            n: 4,
            kind: "clement".into(),
            profile: "std64".into(),
            r: 1e-16,
            o: 2e-16,
            rho: 0.25,
            d_max: 0,
            phi_fail: false,
            workers: 1,
            t_values_s: 0.1,
            t_vectors_s: 0.2,
            o_sampled: false,
            uncertified_shift_count: 0,
            total_shift_count: 0,
        };
        assert_eq!(report_to_csv_row(&r).split(',').count(), csv_header().split(',').count());
        let json = report_to_json(&r);
        for col in REPORT_COLUMNS {
            assert!(json.contains(&format!("\"{col}\"")), "missing {col}");
        }
    }
}
