//! Shared front half of both identification algorithms: oblique projections,
//! weighted SVD, order detection, extended observability matrix and state
//! sequences.
//!
//! The similarity transform is fixed to the identity, so `Γ_i = W1⁻¹ U1 S1^{1/2}`
//! and every downstream comparison against a true model must be
//! similarity-invariant.

use crate::error::{Error, Result};
use crate::hankel::HankelSet;
use crate::linalg::{self, Matrix, SvdFactors};

pub const DEFAULT_ORDER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Default)]
pub enum Weight {
    #[default]
    Identity,
    Matrix(Matrix),
}

impl Weight {
    fn apply_left(&self, m: &Matrix) -> Matrix {
        match self {
            Weight::Identity => m.clone(),
            Weight::Matrix(w) => w * m,
        }
    }

    fn apply_right(&self, m: &Matrix) -> Matrix {
        match self {
            Weight::Identity => m.clone(),
            Weight::Matrix(w) => m * w,
        }
    }
}

/// `(W1, W2)`; `W1` must be nonsingular and `W2` must preserve `rank[W_p]`.
#[derive(Debug, Clone, Default)]
pub struct WeightingScheme {
    pub w1: Weight,
    pub w2: Weight,
}

impl WeightingScheme {
    pub fn identity() -> Self {
        Self::default()
    }

    fn validate(&self, h: &HankelSet, rank_tol: f64) -> Result<()> {
        let im = h.config.i * h.m;
        let j = h.config.j;
        if let Weight::Matrix(w1) = &self.w1 {
            if w1.shape() != (im, im) {
                return Err(Error::Weighting(format!(
                    "W1 must be {im}x{im}, got {:?}",
                    w1.shape()
                )));
            }
            linalg::ensure_finite(w1, "W1")?;
            if linalg::rank_with_tol(w1, rank_tol)? != im {
                return Err(Error::Weighting("W1 is singular".into()));
            }
        }
        if let Weight::Matrix(w2) = &self.w2 {
            if w2.shape() != (j, j) {
                return Err(Error::Weighting(format!("W2 must be {j}x{j}, got {:?}", w2.shape())));
            }
            linalg::ensure_finite(w2, "W2")?;
            let before = linalg::rank_with_tol(&h.wp, rank_tol)?;
            let after = linalg::rank_with_tol(&(&h.wp * w2), rank_tol)?;
            if before != after {
                return Err(Error::Weighting(format!(
                    "W2 changes rank[W_p] from {before} to {after}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rank_tol: f64,
    pub order_tol: f64,
    pub forced_order: Option<usize>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: linalg::DEFAULT_RANK_TOL,
            order_tol: DEFAULT_ORDER_TOL,
            forced_order: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObliqueProjections {
    /// `Y_f /_{U_f} W_p`
    pub oi: Matrix,
    /// `Y_f^- /_{U_f^-} W_p^+`
    pub oi_minus: Matrix,
    /// Human-readable notes about rank-deficient projections.
    pub degenerate: Vec<String>,
}

/// True when `C Π_B^⊥` lost rank relative to `C`.
fn projection_is_degenerate(b: &Matrix, c: &Matrix, rank_tol: f64) -> Result<bool> {
    let c_perp = linalg::project_out_rows(c, b, rank_tol)?;
    Ok(linalg::rank_with_tol(&c_perp, rank_tol)? < linalg::rank_with_tol(c, rank_tol)?)
}

pub fn compute_oblique_projections(h: &HankelSet, rank_tol: f64) -> Result<ObliqueProjections> {
    let oi = linalg::oblique_project(&h.yf, &h.uf, &h.wp, rank_tol)?;
    let oi_minus = linalg::oblique_project(&h.yf_minus, &h.uf_minus, &h.wp_plus, rank_tol)?;
    let mut degenerate = Vec::new();
    if projection_is_degenerate(&h.uf, &h.wp, rank_tol)? {
        degenerate.push("W_p loses rank after removing the row space of U_f".to_string());
    }
    if h.uf_minus.nrows() > 0 && projection_is_degenerate(&h.uf_minus, &h.wp_plus, rank_tol)? {
        degenerate.push("W_p^+ loses rank after removing the row space of U_f^-".to_string());
    }
    Ok(ObliqueProjections {
        oi,
        oi_minus,
        degenerate,
    })
}

/// Number of singular values above `order_tol * sigma_max`, unless forced.
pub fn detect_order(singular_values: &[f64], order_tol: f64, forced: Option<usize>) -> Result<usize> {
    if singular_values.is_empty() {
        return Err(Error::Order("no singular values".into()));
    }
    if let Some(k) = forced {
        return Ok(k.min(singular_values.len()));
    }
    let tol = if order_tol > 0.0 { order_tol } else { DEFAULT_ORDER_TOL };
    let threshold = tol * singular_values[0].max(f64::MIN_POSITIVE);
    Ok(singular_values.iter().filter(|&&s| s > threshold).count())
}

#[derive(Debug, Clone)]
pub struct IdentificationCore {
    pub oi: Matrix,
    pub oi_minus: Matrix,
    /// Full SVD of `W1 O_i W2`, left factor square.
    pub weighted_svd: SvdFactors,
    /// Leading `order` triplets of `weighted_svd`.
    pub u1: Matrix,
    pub s1: Vec<f64>,
    pub v1: Matrix,
    /// Left singular vectors beyond the detected order.
    pub u2: Matrix,
    pub order: usize,
    pub gamma_i: Matrix,
    /// `Γ_i` without its last m rows.
    pub gamma_i_minus: Matrix,
    pub xi: Matrix,
    pub xi_plus: Matrix,
    pub singular_values: Vec<f64>,
    pub flags: Vec<String>,
}

fn invert_w1(w: &Weight, m: Matrix) -> Result<Matrix> {
    match w {
        Weight::Identity => Ok(m),
        Weight::Matrix(w1) => w1
            .clone()
            .lu()
            .solve(&m)
            .ok_or_else(|| Error::Weighting("W1 is singular".into())),
    }
}

pub fn run_unifying_pipeline(
    h: &HankelSet,
    w: &WeightingScheme,
    tols: &Tolerances,
) -> Result<IdentificationCore> {
    let i = h.config.i;
    let m = h.m;
    if i < 2 {
        return Err(Error::Structure(
            "i must be at least 2 so that Γ_{i-1} and O_{i-1} exist".into(),
        ));
    }
    w.validate(h, tols.rank_tol)?;

    let proj = compute_oblique_projections(h, tols.rank_tol)?;
    let weighted = w.w2.apply_right(&w.w1.apply_left(&proj.oi));
    let f = linalg::svd_full(&weighted)?;
    let order = detect_order(&f.singular_values, tols.order_tol, tols.forced_order)?;
    if order == 0 {
        return Err(Error::Order(
            "all singular values of the weighted projection are below tolerance".into(),
        ));
    }

    let u1 = f.left.columns(0, order).into_owned();
    let u2 = f.left.columns(order, f.left.ncols() - order).into_owned();
    let s1 = f.singular_values[..order].to_vec();
    let v1 = f.right.columns(0, order).into_owned();

    let mut scaled = u1.clone();
    for (c, s) in s1.iter().enumerate() {
        scaled.column_mut(c).scale_mut(s.sqrt());
    }
    let gamma_i = invert_w1(&w.w1, scaled)?;
    let gamma_i_minus = gamma_i.rows(0, (i - 1) * m).into_owned();

    let xi = linalg::pinv(&gamma_i, tols.rank_tol)? * &proj.oi;
    let xi_plus = linalg::pinv(&gamma_i_minus, tols.rank_tol)? * &proj.oi_minus;

    let mut flags = proj.degenerate;
    if linalg::rank_with_tol(&gamma_i, tols.rank_tol)? < order {
        flags.push(format!("Γ_i is not of full column rank {order}"));
    }
    if linalg::rank_with_tol(&gamma_i_minus, tols.rank_tol)? < order {
        flags.push(format!("Γ_(i-1) is not of full column rank {order}"));
    }

    Ok(IdentificationCore {
        oi: proj.oi,
        oi_minus: proj.oi_minus,
        singular_values: f.singular_values.clone(),
        weighted_svd: f,
        u1,
        s1,
        v1,
        u2,
        order,
        gamma_i,
        gamma_i_minus,
        xi,
        xi_plus,
        flags,
    })
}
