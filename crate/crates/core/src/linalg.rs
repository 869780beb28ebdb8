//! Dense real-matrix kernels shared by every other module.
//!
//! All rank decisions use a *relative* tolerance: a singular value counts as
//! nonzero when it exceeds `rank_tol * sigma_max`. A tolerance of zero (or any
//! non-positive value) selects [`DEFAULT_RANK_TOL`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Maps a user tolerance onto the effective relative tolerance.
pub fn resolve_tol(rank_tol: f64) -> f64 {
    if rank_tol > 0.0 && rank_tol.is_finite() {
        rank_tol
    } else {
        DEFAULT_RANK_TOL
    }
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite entries")))
    }
}

/// Singular value decomposition `M = left * diag(singular_values) * right^T`
/// with singular values sorted in non-increasing order.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub left: Matrix,
    pub singular_values: Vec<f64>,
    pub right: Matrix,
}

impl SvdFactors {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `rank_tol * sigma_max`.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let threshold = resolve_tol(rank_tol) * self.sigma_max();
        self.singular_values.iter().filter(|&&s| s > threshold).count()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> SvdFactors {
        let k = k.min(self.singular_values.len());
        SvdFactors {
            left: self.left.columns(0, k).into_owned(),
            singular_values: self.singular_values[..k].to_vec(),
            right: self.right.columns(0, k).into_owned(),
        }
    }

    pub fn reconstruct(&self) -> Matrix {
        let k = self.singular_values.len();
        let mut scaled = self.left.columns(0, k).into_owned();
        for (c, s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(c).scale_mut(*s);
        }
        scaled * self.right.columns(0, k).transpose()
    }
}

/// Thin SVD: `left` is rows x k, `right` is cols x k with k = min(rows, cols).
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    decompose(m, false)
}

/// SVD whose `left` factor is a square orthogonal matrix.
///
/// Columns beyond `min(rows, cols)` span the orthogonal complement of the
/// column space and carry implicit zero singular values.
pub fn svd_full(m: &Matrix) -> Result<SvdFactors> {
    decompose(m, true)
}

// nalgebra's SVD returns wrong singular values on some rank-deficient inputs
// when singular vectors are requested, so the factorisation goes through faer.
fn decompose(m: &Matrix, full_left: bool) -> Result<SvdFactors> {
    ensure_finite(m, "matrix")?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        let left_cols = if full_left { rows } else { 0 };
        let mut left = Matrix::zeros(rows, left_cols);
        left.fill_with_identity();
        return Ok(SvdFactors {
            left,
            singular_values: Vec::new(),
            right: Matrix::zeros(cols, 0),
        });
    }
    let a = faer::Mat::<f64>::from_fn(rows, cols, |r, c| m[(r, c)]);
    let not_converged = |_| Error::InvalidInput("SVD did not converge".into());
    let (u, s, v) = if full_left {
        let f = a.svd().map_err(not_converged)?;
        let s: Vec<f64> = (0..k).map(|t| f.S()[t]).collect();
        (f.U().to_owned(), s, f.V().to_owned())
    } else {
        let f = a.thin_svd().map_err(not_converged)?;
        let s: Vec<f64> = (0..k).map(|t| f.S()[t]).collect();
        (f.U().to_owned(), s, f.V().to_owned())
    };
    let left_cols = if full_left { rows } else { k };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    let mut left = Matrix::zeros(rows, left_cols);
    let mut right = Matrix::zeros(cols, k);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..rows {
            left[(r, dst)] = u[(r, src)];
        }
        for r in 0..cols {
            right[(r, dst)] = v[(r, src)];
        }
    }
    for c in k..left_cols {
        for r in 0..rows {
            left[(r, c)] = u[(r, c)];
        }
    }
    let singular_values = order.iter().map(|&t| s[t].max(0.0)).collect();
    Ok(SvdFactors {
        left,
        singular_values,
        right,
    })
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    svd(m).map(|f| f.sigma_max()).unwrap_or(f64::NAN)
}

/// Smallest singular value above the rank tolerance; zero for a zero matrix.
pub fn sigma_min_nonzero(m: &Matrix, rank_tol: f64) -> Result<f64> {
    let f = svd(m)?;
    let r = f.rank(rank_tol);
    Ok(if r == 0 { 0.0 } else { f.singular_values[r - 1] })
}

/// Moore-Penrose inverse by SVD truncation.
pub fn pinv(m: &Matrix, rank_tol: f64) -> Result<Matrix> {
    let f = svd(m)?;
    Ok(pinv_from_svd(&f, m.shape(), rank_tol))
}

pub(crate) fn pinv_from_svd(f: &SvdFactors, shape: (usize, usize), rank_tol: f64) -> Matrix {
    let (rows, cols) = shape;
    let r = f.rank(rank_tol);
    let mut v = f.right.columns(0, r).into_owned();
    for c in 0..r {
        v.column_mut(c).scale_mut(1.0 / f.singular_values[c]);
    }
    if r == 0 {
        return Matrix::zeros(cols, rows);
    }
    v * f.left.columns(0, r).transpose()
}

/// Orthonormal basis (as columns) of the row space of `b`.
fn row_space_basis(b: &Matrix, rank_tol: f64) -> Result<Matrix> {
    let f = svd(b)?;
    let r = f.rank(rank_tol);
    Ok(f.right.columns(0, r).into_owned())
}

/// `Π_B = Bᵀ(BBᵀ)†B`, the orthogonal projector onto the row space of `b`.
pub fn row_projector(b: &Matrix, rank_tol: f64) -> Result<Matrix> {
    if b.nrows() == 0 {
        return Err(Error::InvalidInput("row projector needs at least one row".into()));
    }
    let basis = row_space_basis(b, rank_tol)?;
    Ok(&basis * basis.transpose())
}

/// `A Π_B^⊥` without materialising the l x l projector.
pub fn project_out_rows(a: &Matrix, b: &Matrix, rank_tol: f64) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "row-space projection needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    ensure_finite(a, "projected matrix")?;
    if b.nrows() == 0 {
        return Ok(a.clone());
    }
    let basis = row_space_basis(b, rank_tol)?;
    Ok(a - (a * &basis) * basis.transpose())
}

/// Oblique projection `A /_B C = A Π_B^⊥ (C Π_B^⊥)† C` of the row space of
/// `a` along the row space of `b` onto the row space of `c`.
///
/// Evaluated as `L32 L22† C` from the LQ factorisation of `[Q_B; C; A]`,
/// with `Q_B` an orthonormal basis of the rows of `b`.
pub fn oblique_project(a: &Matrix, b: &Matrix, c: &Matrix, rank_tol: f64) -> Result<Matrix> {
    let l = a.ncols();
    if b.ncols() != l || c.ncols() != l {
        return Err(Error::Dimension(format!(
            "oblique projection needs a shared column count, got {}, {}, {}",
            l,
            b.ncols(),
            c.ncols()
        )));
    }
    ensure_finite(a, "projected matrix")?;
    ensure_finite(c, "target matrix")?;
    let basis = if b.nrows() == 0 {
        Matrix::zeros(0, l)
    } else {
        row_space_basis(b, rank_tol)?.transpose()
    };
    let (r, k) = (basis.nrows(), c.nrows());
    if r + k > l {
        let a_perp = project_out_rows(a, b, rank_tol)?;
        let c_perp = project_out_rows(c, b, rank_tol)?;
        return Ok(a_perp * pinv(&c_perp, rank_tol)? * c);
    }
    let lower = lq_lower(&vstack(&[&basis, c, a])?);
    let l22 = lower.view((r, r), (k, k)).into_owned();
    let l32 = lower.view((r + k, r), (a.nrows(), k)).into_owned();
    Ok(l32 * pinv(&l22, rank_tol)? * c)
}

/// Lower-trapezoidal `L` of `m = L Q` with orthonormal rows in `Q`.
fn lq_lower(m: &Matrix) -> Matrix {
    let (rows, cols) = m.shape();
    let t = faer::Mat::<f64>::from_fn(cols, rows, |r, c| m[(c, r)]);
    let qr = t.qr();
    let upper = qr.thin_R();
    Matrix::from_fn(rows, upper.nrows(), |r, c| upper[(c, r)])
}

pub fn rank_with_tol(m: &Matrix, rank_tol: f64) -> Result<usize> {
    Ok(svd(m)?.rank(rank_tol))
}

/// `cond(M) = ‖M‖‖M†‖` with the pseudo-inverse taken at the rank tolerance.
pub fn cond_spectral(m: &Matrix, rank_tol: f64) -> Result<f64> {
    let f = svd(m)?;
    let r = f.rank(rank_tol);
    if r == 0 {
        return Err(Error::UndefinedCondition);
    }
    Ok(f.sigma_max() / f.singular_values[r - 1])
}

/// Vertical concatenation; all blocks must share a column count.
pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(Error::Dimension("vstack blocks differ in column count".into()));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(*b);
        r += b.nrows();
    }
    Ok(out)
}
