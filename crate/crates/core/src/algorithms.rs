//! The two identification algorithms built on [`crate::pipeline`]:
//! the state approach (least squares on recovered state sequences) and the
//! shift-invariance approach (A from the shift structure of Γ_i, then B and D
//! from a block-Hankel least-squares problem).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::HankelSet;
use crate::linalg::{self, Matrix};
use crate::lti::{self, StateSpaceModel};
use crate::pipeline::{self, IdentificationCore, Tolerances, WeightingScheme};
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    State,
    Shift,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::State => "state",
            Method::Shift => "shift",
        })
    }
}

/// Least-squares data behind the identified matrices, kept for the bound
/// evaluators.
#[derive(Debug, Clone)]
pub enum SolveData {
    /// `target = Θ · regressor` with `Θ = [A B; C D]`,
    /// `regressor = [X_i; U_{i,i,j}]`, `target = [X_{i+1}; Y_{i,i,j}]`.
    State {
        regressor: Matrix,
        target: Matrix,
        theta: Matrix,
    },
    /// `M = L · [D; B]`.
    Shift {
        l: Matrix,
        m_rhs: Matrix,
        db: Matrix,
    },
}

#[derive(Debug, Clone)]
pub struct IdentificationResult {
    pub model: StateSpaceModel,
    pub order: usize,
    pub method: Method,
    pub core: IdentificationCore,
    pub solve: SolveData,
    pub diagnostics: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

/// Minimum-norm solution of `target = Θ · regressor`.
pub fn solve_state_equations(regressor: &Matrix, target: &Matrix, rank_tol: f64) -> Result<Matrix> {
    Ok(target * linalg::pinv(regressor, rank_tol)?)
}

/// Splits `Θ = [A B; C D]` with `n` states.
pub fn split_theta(theta: &Matrix, n: usize) -> Result<StateSpaceModel> {
    let (rows, cols) = theta.shape();
    StateSpaceModel::new(
        theta.view((0, 0), (n, n)).into_owned(),
        theta.view((0, n), (n, cols - n)).into_owned(),
        theta.view((n, 0), (rows - n, n)).into_owned(),
        theta.view((n, n), (rows - n, cols - n)).into_owned(),
    )
}

pub fn identify_state_approach(
    h: &HankelSet,
    w: &WeightingScheme,
    tols: &Tolerances,
) -> Result<IdentificationResult> {
    let core = pipeline::run_unifying_pipeline(h, w, tols)?;
    let n = core.order;
    let regressor = linalg::vstack(&[&core.xi, &h.uii])?;
    let target = linalg::vstack(&[&core.xi_plus, &h.yii])?;
    let theta = solve_state_equations(&regressor, &target, tols.rank_tol)?;
    let model = split_theta(&theta, n)?;

    let mut flags = core.flags.clone();
    let reg_svd = linalg::svd(&regressor)?;
    let rank = reg_svd.rank(tols.rank_tol);
    if rank < n + h.p {
        flags.push(format!(
            "[X_i; U_ii] has rank {rank} < n + p = {}; full-rank bounds do not apply",
            n + h.p
        ));
    }
    let sigma_min = if rank == 0 { 0.0 } else { reg_svd.singular_values[rank - 1] };
    let residual = (&target - &theta * &regressor).norm();

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("order".into(), n as f64);
    diagnostics.insert("regressor_rank".into(), rank as f64);
    diagnostics.insert("regressor_sigma_min".into(), sigma_min);
    diagnostics.insert("regressor_norm".into(), reg_svd.sigma_max());
    diagnostics.insert(
        "regressor_cond".into(),
        if sigma_min > 0.0 { reg_svd.sigma_max() / sigma_min } else { f64::INFINITY },
    );
    diagnostics.insert("theta_norm".into(), linalg::spectral_norm(&theta));
    diagnostics.insert("state_residual".into(), residual);
    diagnostics.insert("state_residual_rel".into(), residual / target.norm().max(f64::MIN_POSITIVE));
    insert_gamma_diagnostics(&mut diagnostics, &core, tols.rank_tol)?;

    Ok(IdentificationResult {
        model,
        order: n,
        method: Method::State,
        core,
        solve: SolveData::State {
            regressor,
            target,
            theta,
        },
        diagnostics,
        flags,
    })
}

fn insert_gamma_diagnostics(
    diagnostics: &mut BTreeMap<String, f64>,
    core: &IdentificationCore,
    rank_tol: f64,
) -> Result<()> {
    let g = linalg::svd(&core.gamma_i)?;
    let r = g.rank(rank_tol);
    let smin = if r == 0 { 0.0 } else { g.singular_values[r - 1] };
    diagnostics.insert("gamma_sigma_min".into(), smin);
    diagnostics.insert("gamma_norm".into(), g.sigma_max());
    diagnostics.insert(
        "gamma_cond".into(),
        if smin > 0.0 { g.sigma_max() / smin } else { f64::INFINITY },
    );
    diagnostics.insert(
        "gamma_under_sigma_min".into(),
        linalg::sigma_min_nonzero(&core.gamma_i_minus, rank_tol)?,
    );
    Ok(())
}

/// `A = Γ̲_i† Γ̄_i` where Γ̲ drops the last and Γ̄ the first `m` rows.
pub fn shift_a(gamma: &Matrix, m: usize, rank_tol: f64) -> Result<Matrix> {
    let rows = gamma.nrows();
    if rows < 2 * m {
        return Err(Error::Structure("Γ_i needs at least two block rows".into()));
    }
    let under = gamma.rows(0, rows - m).into_owned();
    let over = gamma.rows(m, rows - m).into_owned();
    Ok(linalg::pinv(&under, rank_tol)? * over)
}

/// Coefficient of the B/D least-squares problem,
/// `Hankel(L_1 … L_i) · diag(I_m, Γ_{i−1})`.
///
/// The block-Hankel factor has `(k, c)` block `L_{k+c}` (zero past `L_i`);
/// multiplying by `diag(I_m, Γ_{i−1})` maps the unknown `[D; B]`
/// of size `(m + n) x p` onto the stacked `M_k`.
pub fn shift_bd_coefficient(gamma_perp: &Matrix, gamma_under: &Matrix, i: usize, m: usize) -> Result<Matrix> {
    let q = gamma_perp.nrows();
    if gamma_perp.ncols() != i * m || gamma_under.nrows() != (i - 1) * m {
        return Err(Error::Dimension(
            "Γ_i^⊥ must be (mi − n) x mi and Γ_(i-1) must have (i − 1)m rows".into(),
        ));
    }
    let n = gamma_under.ncols();
    let mut hankel = Matrix::zeros(i * q, i * m);
    for k in 0..i {
        for c in 0..i - k {
            hankel
                .view_mut((k * q, c * m), (q, m))
                .copy_from(&gamma_perp.columns((k + c) * m, m));
        }
    }
    let mut selector = Matrix::zeros(i * m, m + n);
    selector.view_mut((0, 0), (m, m)).fill_with_identity();
    selector.view_mut((m, m), ((i - 1) * m, n)).copy_from(gamma_under);
    Ok(hankel * selector)
}

/// Restacks `Γ_i^⊥ Y_f U_f† = [M_1 … M_i]` as the column `[M_1; …; M_i]`.
pub fn stack_m_blocks(m_row: &Matrix, i: usize, p: usize) -> Matrix {
    let q = m_row.nrows();
    let mut out = Matrix::zeros(i * q, p);
    for k in 0..i {
        out.rows_mut(k * q, q).copy_from(&m_row.columns(k * p, p));
    }
    out
}

pub fn identify_shift_invariance(
    h: &HankelSet,
    w: &WeightingScheme,
    tols: &Tolerances,
) -> Result<IdentificationResult> {
    let (i, m, p) = (h.config.i, h.m, h.p);
    if i < 2 {
        return Err(Error::Structure("shift invariance needs i >= 2".into()));
    }
    let core = pipeline::run_unifying_pipeline(h, w, tols)?;
    let n = core.order;
    if m * i <= n {
        return Err(Error::Structure(format!(
            "Γ_i has no left null space: need m·i > n, got m·i = {} and n = {n}; increase i",
            m * i
        )));
    }

    let gamma = &core.gamma_i;
    let a = shift_a(gamma, m, tols.rank_tol)?;
    let c = gamma.rows(0, m).into_owned();

    let w1 = match &w.w1 {
        pipeline::Weight::Identity => Matrix::identity(i * m, i * m),
        pipeline::Weight::Matrix(w1) => w1.clone(),
    };
    let gamma_perp = core.u2.transpose() * w1;
    let m_row = &gamma_perp * &h.yf * linalg::pinv(&h.uf, tols.rank_tol)?;
    let m_rhs = stack_m_blocks(&m_row, i, p);
    let l = shift_bd_coefficient(&gamma_perp, &core.gamma_i_minus, i, m)?;
    let db = linalg::pinv(&l, tols.rank_tol)? * &m_rhs;
    let d = db.rows(0, m).into_owned();
    let b = db.rows(m, n).into_owned();
    let model = StateSpaceModel::new(a.clone(), b, c, d)?;

    let mut flags = core.flags.clone();
    let under = &core.gamma_i_minus;
    let over = gamma.rows(m, (i - 1) * m).into_owned();
    if linalg::rank_with_tol(under, tols.rank_tol)? < n {
        flags.push(format!("Γ̲_i has rank below n = {n}; A is not unique"));
    }
    let l_svd = linalg::svd(&l)?;
    let l_rank = l_svd.rank(tols.rank_tol);
    if l_rank < m + n {
        flags.push(format!(
            "L has rank {l_rank} < m + n = {}; B and D are not unique",
            m + n
        ));
    }
    let l_smin = if l_rank == 0 { 0.0 } else { l_svd.singular_values[l_rank - 1] };

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("order".into(), n as f64);
    insert_gamma_diagnostics(&mut diagnostics, &core, tols.rank_tol)?;
    diagnostics.insert("l_rank".into(), l_rank as f64);
    diagnostics.insert("l_sigma_min".into(), l_smin);
    diagnostics.insert("l_norm".into(), l_svd.sigma_max());
    diagnostics.insert(
        "l_cond".into(),
        if l_smin > 0.0 { l_svd.sigma_max() / l_smin } else { f64::INFINITY },
    );
    let shift_residual = (under * &a - &over).norm();
    diagnostics.insert("shift_residual".into(), shift_residual);
    diagnostics.insert("shift_residual_rel".into(), shift_residual / over.norm().max(f64::MIN_POSITIVE));
    let bd_residual = (&m_rhs - &l * &db).norm();
    diagnostics.insert("bd_residual".into(), bd_residual);
    diagnostics.insert("bd_residual_rel".into(), bd_residual / m_rhs.norm().max(f64::MIN_POSITIVE));

    Ok(IdentificationResult {
        model,
        order: n,
        method: Method::Shift,
        core,
        solve: SolveData::Shift { l, m_rhs, db },
        diagnostics,
        flags,
    })
}

pub fn identify(
    h: &HankelSet,
    w: &WeightingScheme,
    tols: &Tolerances,
    method: Method,
) -> Result<IdentificationResult> {
    match method {
        Method::State => identify_state_approach(h, w, tols),
        Method::Shift => identify_shift_invariance(h, w, tols),
    }
}

/// Similarity-invariant distance between two realisations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub pole_hausdorff: f64,
    pub markov_rel_error: f64,
}

/// Pole Hausdorff distance and `max_k ‖M_k(a) − M_k(b)‖ / max(1, ‖M_k(a)‖)`
/// over the first `horizon` Markov parameters.
pub fn compare_up_to_similarity(
    a: &StateSpaceModel,
    b: &StateSpaceModel,
    horizon: usize,
) -> Result<SimilarityReport> {
    if a.m() != b.m() || a.p() != b.p() {
        return Err(Error::Dimension(format!(
            "models differ in I/O size: ({}, {}) vs ({}, {})",
            a.m(),
            a.p(),
            b.m(),
            b.p()
        )));
    }
    let pole_hausdorff = spectral::hausdorff_distance(&a.poles()?, &b.poles()?)?;
    let ma = lti::markov_parameters(a, horizon);
    let mb = lti::markov_parameters(b, horizon);
    let markov_rel_error = ma
        .iter()
        .zip(&mb)
        .map(|(x, y)| linalg::spectral_norm(&(x - y)) / linalg::spectral_norm(x).max(1.0))
        .fold(0.0, f64::max);
    Ok(SimilarityReport {
        pole_hausdorff,
        markov_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::HankelConfig;
    use crate::lti::DiagonalModelSpec;
    use nalgebra::{dmatrix, DVector};

    fn data(model: &StateSpaceModel, i: usize, seed: u64) -> HankelSet {
        let j = 4 * i * (model.m() + model.p());
        let cfg = HankelConfig::new(i, j).unwrap();
        let u = lti::random_excitation(model.p(), cfg.samples_needed(), seed);
        let traj = lti::simulate(model, &DVector::zeros(model.n()), &u).unwrap();
        HankelSet::build(&traj, cfg).unwrap()
    }

    fn model(n: usize, m: usize, p: usize, seed: u64) -> StateSpaceModel {
        lti::random_diagonal_model(&DiagonalModelSpec::new(n, m, p, seed)).unwrap()
    }

    #[test]
    fn state_approach_recovers_mimo_system() {
        let truth = model(3, 2, 2, 40);
        let h = data(&truth, 5, 41);
        let res = identify_state_approach(&h, &WeightingScheme::identity(), &Tolerances::default()).unwrap();
        assert_eq!(res.order, 3);
        let cmp = compare_up_to_similarity(&truth, &res.model, 10).unwrap();
        assert!(cmp.pole_hausdorff <= 1e-6, "{cmp:?}");
        assert!(cmp.markov_rel_error <= 1e-8, "{cmp:?}");
        assert!(res.diagnostics["state_residual_rel"] <= 1e-8);
        assert!(res.flags.is_empty(), "{:?}", res.flags);
    }

    #[test]
    fn shift_approach_recovers_siso_system() {
        let truth = model(2, 1, 1, 50);
        let h = data(&truth, 4, 51);
        let res = identify_shift_invariance(&h, &WeightingScheme::identity(), &Tolerances::default()).unwrap();
        assert_eq!(res.order, 2);
        let cmp = compare_up_to_similarity(&truth, &res.model, 8).unwrap();
        assert!(cmp.pole_hausdorff <= 1e-6, "{cmp:?}");
        assert!(cmp.markov_rel_error <= 1e-7, "{cmp:?}");
        assert!(res.diagnostics["shift_residual_rel"] <= 1e-8);
        assert!(res.diagnostics["bd_residual_rel"] <= 1e-8);
    }

    #[test]
    fn algorithms_agree_on_poles() {
        let truth = model(4, 2, 1, 60);
        let h = data(&truth, 6, 61);
        let w = WeightingScheme::identity();
        let tols = Tolerances::default();
        let a = identify_state_approach(&h, &w, &tols).unwrap();
        let b = identify_shift_invariance(&h, &w, &tols).unwrap();
        assert!(spectral::pole_distance(a.model.a(), b.model.a()).unwrap() <= 1e-6);
    }

    #[test]
    fn shift_a_on_true_gamma() {
        let truth = model(3, 2, 1, 70);
        let gamma = lti::extended_observability(&truth, 4);
        let a = shift_a(&gamma, 2, 0.0).unwrap();
        assert!(spectral::pole_distance(&a, truth.a()).unwrap() <= 1e-10);
        let c = gamma.rows(0, 2).into_owned();
        assert_eq!(c, *truth.c());
    }

    #[test]
    fn shift_needs_left_null_space() {
        let truth = model(3, 1, 1, 80);
        let h = data(&truth, 3, 81);
        assert!(matches!(
            identify_shift_invariance(&h, &WeightingScheme::identity(), &Tolerances::default()),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn stack_m_blocks_layout() {
        let row = dmatrix![1.0, 2.0, 3.0, 4.0; 5.0, 6.0, 7.0, 8.0];
        assert_eq!(
            stack_m_blocks(&row, 2, 2),
            dmatrix![1.0, 2.0; 5.0, 6.0; 3.0, 4.0; 7.0, 8.0]
        );
    }

    #[test]
    fn similarity_comparison() {
        let a = model(3, 2, 2, 90);
        let same = compare_up_to_similarity(&a, &a, 6).unwrap();
        assert_eq!((same.pole_hausdorff, same.markov_rel_error), (0.0, 0.0));

        let t = dmatrix![1.0, 0.3, -0.2; 0.1, 2.0, 0.5; 0.0, -0.4, 1.5];
        let b = a.similarity_transform(&t).unwrap();
        let sim = compare_up_to_similarity(&a, &b, 6).unwrap();
        assert!(sim.pole_hausdorff <= 1e-9 && sim.markov_rel_error <= 1e-9, "{sim:?}");

        let other = model(3, 1, 2, 91);
        assert!(compare_up_to_similarity(&a, &other, 4).is_err());
    }

    #[test]
    fn pole_shift_by_a_tenth() {
        let a = StateSpaceModel::new(
            dmatrix![0.9, 0.0; 0.0, -0.5],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 1.0],
            dmatrix![0.0],
        )
        .unwrap();
        let b = StateSpaceModel::new(
            dmatrix![0.8, 0.0; 0.0, -0.5],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 1.0],
            dmatrix![0.0],
        )
        .unwrap();
        let r = compare_up_to_similarity(&a, &b, 4).unwrap();
        assert!((r.pole_hausdorff - 0.1).abs() < 1e-12);
    }
}
