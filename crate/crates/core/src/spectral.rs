//! Spectra, one-sided spectrum variation, the Hausdorff distance between
//! spectra, and the Frobenius-norm eigenvalue perturbation bound.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Eigenvalue multiset of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(pub Vec<Complex64>);

impl Spectrum {
    pub fn from_real(values: &[f64]) -> Self {
        Spectrum(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }
}

/// Eigenvalues with multiplicity.
pub fn eigenvalues(m: &Matrix) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    crate::linalg::ensure_finite(m, "matrix")?;
    if m.nrows() == 0 {
        return Ok(Spectrum(Vec::new()));
    }
    if is_triangular(m) {
        return Ok(Spectrum::from_real(m.diagonal().as_slice()));
    }
    let n = m.nrows();
    let a = faer::Mat::<f64>::from_fn(n, n, |r, c| m[(r, c)]);
    let values = a.eigenvalues().map_err(|_| Error::Eigen)?;
    Ok(Spectrum(values.into_iter().map(|z| Complex64::new(z.re, z.im)).collect()))
}

/// Triangular (including diagonal) matrices carry their spectrum on the diagonal.
fn is_triangular(m: &Matrix) -> bool {
    let n = m.nrows();
    let upper = (0..n).all(|r| (0..r).all(|c| m[(r, c)] == 0.0));
    let lower = (0..n).all(|r| (r + 1..n).all(|c| m[(r, c)] == 0.0));
    upper || lower
}

fn check_sizes(a: &Spectrum, b: &Spectrum) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "spectra have different sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `max_{μ ∈ other} min_{λ ∈ reference} |λ − μ|`.
pub fn spectrum_variation(reference: &Spectrum, other: &Spectrum) -> Result<f64> {
    check_sizes(reference, other)?;
    Ok(other
        .values()
        .iter()
        .map(|mu| {
            reference
                .values()
                .iter()
                .map(|lambda| (lambda - mu).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max))
}

pub fn hausdorff_distance(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    Ok(spectrum_variation(a, b)?.max(spectrum_variation(b, a)?))
}

/// Hausdorff distance between the spectra of two square matrices.
pub fn pole_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    hausdorff_distance(&eigenvalues(a)?, &eigenvalues(b)?)
}

/// `n^{1/(2n)} [(1 + 1/√n)^n − 1]^{1/n}`.
pub fn elsner_coefficient(n: usize) -> f64 {
    let nf = n as f64;
    let inner = (1.0 + 1.0 / nf.sqrt()).powi(n as i32) - 1.0;
    nf.powf(1.0 / (2.0 * nf)) * inner.powf(1.0 / nf)
}

/// Coefficient with `[(1 + 1/√n)^n − 1]^{1/n}` relaxed to `1 + 1/√n`.
pub fn elsner_coefficient_relaxed(n: usize) -> f64 {
    let nf = n as f64;
    nf.powf(1.0 / (2.0 * nf)) * (1.0 + 1.0 / nf.sqrt())
}

fn check_pair(a: &Matrix, b: &Matrix) -> Result<usize> {
    if !a.is_square() || !b.is_square() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "bound needs two n x n matrices, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::Dimension("bound needs n >= 1".into()));
    }
    Ok(a.nrows())
}

/// Upper bound on `d_H(λ(A), λ(B))` from Frobenius norms:
/// `c_n · max(‖A‖_F, ‖B‖_F)^{1−1/n} · ‖A − B‖_F^{1/n}`.
pub fn elsner_bound(a: &Matrix, b: &Matrix) -> Result<f64> {
    let n = check_pair(a, b)?;
    let nf = n as f64;
    let m_f = a.norm().max(b.norm());
    let diff = (a - b).norm();
    Ok(elsner_coefficient(n) * m_f.powf(1.0 - 1.0 / nf) * diff.powf(1.0 / nf))
}

/// The same quantity read as a bound on the one-sided variation `sv_A(B)`.
///
/// Numerically identical to [`elsner_bound`]; kept separate because it bounds
/// the weaker one-sided quantity from which the symmetric bound follows.
pub fn elsner_variation_bound(a: &Matrix, b: &Matrix) -> Result<f64> {
    elsner_bound(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted_real(s: &Spectrum) -> Vec<f64> {
        let mut v: Vec<f64> = s.values().iter().map(|z| z.re).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn diagonal_spectrum() {
        let s = eigenvalues(&Matrix::from_diagonal(&nalgebra::dvector![1.0, -2.0, 0.5])).unwrap();
        assert_eq!(sorted_real(&s), vec![-2.0, 0.5, 1.0]);
        assert!(s.values().iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn rotation_spectrum() {
        let s = eigenvalues(&dmatrix![0.0, -1.0; 1.0, 0.0]).unwrap();
        let expected = Spectrum(vec![c(0.0, 1.0), c(0.0, -1.0)]);
        assert!(hausdorff_distance(&s, &expected).unwrap() < 1e-14);
    }

    #[test]
    fn companion_matrix_roots() {
        // (x - 0.3)(x - 0.7) = x^2 - x + 0.21
        let comp = dmatrix![1.0, -0.21; 1.0, 0.0];
        let s = eigenvalues(&comp).unwrap();
        let v = sorted_real(&s);
        assert!((v[0] - 0.3).abs() < 1e-10 && (v[1] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(matches!(eigenvalues(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn variation_examples() {
        let a = Spectrum::from_real(&[1.0, 2.0]);
        assert_eq!(spectrum_variation(&a, &a).unwrap(), 0.0);
        let b = Spectrum::from_real(&[2.0, 4.0]);
        assert_eq!(spectrum_variation(&a, &b).unwrap(), 2.0);
        let near = Spectrum::from_real(&[1.1, 2.0]);
        assert!((spectrum_variation(&a, &near).unwrap() - 0.1).abs() < 1e-15);
        assert!(spectrum_variation(&a, &Spectrum::from_real(&[1.0])).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let a = Spectrum::from_real(&[1.0, 2.0]);
        let b = Spectrum::from_real(&[2.0, 4.0]);
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&a, &b).unwrap(), 2.0);
        assert_eq!(hausdorff_distance(&b, &a).unwrap(), 2.0);
    }

    #[test]
    fn elsner_scalar_case_is_tight() {
        let (a, b) = (dmatrix![0.3], dmatrix![-0.45]);
        assert!((elsner_coefficient(1) - 1.0).abs() < 1e-15);
        let bound = elsner_bound(&a, &b).unwrap();
        assert!((bound - 0.75).abs() < 1e-15);
        assert!((pole_distance(&a, &b).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn elsner_identical_matrices() {
        let a = dmatrix![1.0, 2.0; 3.0, 4.0];
        assert_eq!(elsner_bound(&a, &a).unwrap(), 0.0);
        assert!(elsner_bound(&a, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn relaxed_coefficient_dominates() {
        for n in 1..30 {
            assert!(elsner_coefficient_relaxed(n) >= elsner_coefficient(n));
        }
    }
}
