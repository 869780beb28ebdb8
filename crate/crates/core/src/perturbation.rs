//! Perturbation bounds for the least-squares solves behind both algorithms,
//! the pole bounds derived from them, and an injection harness that compares
//! each bound with the error it is meant to cover.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algorithms::{self, IdentificationResult, Method, SolveData};
use crate::error::{Error, Result};
use crate::hankel::{HankelConfig, HankelSet};
use crate::linalg::{self, Matrix};
use crate::lti::{self, DiagonalModelSpec, StateSpaceModel};
use crate::pipeline::{Tolerances, WeightingScheme};
use crate::spectral;

/// Absolute slack for round-off when comparing a measured error with its bound.
pub const SOUNDNESS_ABS_SLACK: f64 = 1e-12;
/// Relative slack for the same comparison.
pub const SOUNDNESS_REL_SLACK: f64 = 1e-9;

/// Default perturbation scales for sweeps.
pub const DEFAULT_SCALES: [f64; 4] = [1e-8, 1e-6, 1e-4, 1e-2];

const EXCITATION_SALT: u64 = 0x5851_f42d_4c95_7f2d;
const INJECTION_STREAM: u64 = 7;

/// Perturbation bound for the minimum-norm solution of `A x = B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsPerturbationBound {
    pub cond_a: f64,
    /// `1 − ‖A†‖‖E_A‖`
    pub gamma_plus: f64,
    pub norm_ea: f64,
    pub norm_eb: f64,
    pub norm_a: f64,
    pub solution_norm: f64,
    /// `‖B − A x*‖`
    pub residual_norm: f64,
    /// `‖A†ᴴ x*‖`
    pub eta_norm: f64,
    /// Rank-preserving bound, four terms.
    pub bound_general: f64,
    /// Three-term bound, present when `A` has full column rank.
    pub bound_full_rank: Option<f64>,
    /// Tightest applicable bound.
    pub bound: f64,
    pub full_rank_case: bool,
    pub valid: bool,
    pub reason: Option<String>,
}

/// Bounds `‖h‖` where `x* + h` solves the perturbed problem
/// `(A + E_A) x = B + E_B` in the minimum-norm least-squares sense.
pub fn bound_least_squares(
    a: &Matrix,
    b: &Matrix,
    ea: &Matrix,
    eb: &Matrix,
    rank_tol: f64,
) -> Result<LsPerturbationBound> {
    if a.shape() != ea.shape() || b.shape() != eb.shape() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "least-squares bound needs A {:?} ~ E_A {:?} and B {:?} ~ E_B {:?} with matching rows",
            a.shape(),
            ea.shape(),
            b.shape(),
            eb.shape()
        )));
    }
    let fa = linalg::svd(a)?;
    let rank = fa.rank(rank_tol);
    let perturbed_rank = linalg::rank_with_tol(&(a + ea), rank_tol)?;
    let a_pinv = linalg::pinv_from_svd(&fa, a.shape(), rank_tol);
    let norm_a = fa.sigma_max();
    let pinv_norm = if rank == 0 { 0.0 } else { 1.0 / fa.singular_values[rank - 1] };
    let cond_a = norm_a * pinv_norm;
    let norm_ea = linalg::spectral_norm(ea);
    let norm_eb = linalg::spectral_norm(eb);

    let x = &a_pinv * b;
    let residual_norm = linalg::spectral_norm(&(b - a * &x));
    let eta_norm = linalg::spectral_norm(&(a_pinv.transpose() * &x));
    let solution_norm = linalg::spectral_norm(&x);
    let gamma_plus = 1.0 - pinv_norm * norm_ea;

    let mut reason = None;
    if rank == 0 {
        reason = Some("A is zero".to_string());
    } else if rank != perturbed_rank {
        reason = Some(format!("rank changes from {rank} to {perturbed_rank}"));
    } else if gamma_plus <= 0.0 {
        reason = Some("margin violated: ‖A†‖‖E_A‖ ≥ 1".to_string());
    }
    let valid = reason.is_none();
    let full_rank_case = rank == a.ncols() && perturbed_rank == a.ncols();

    let (bound_general, bound_full_rank) = if rank == 0 || gamma_plus <= 0.0 {
        (f64::INFINITY, full_rank_case.then_some(f64::INFINITY))
    } else {
        let lead = cond_a / gamma_plus;
        let core = norm_ea / norm_a * solution_norm
            + norm_eb / norm_a
            + cond_a * norm_ea * residual_norm / (gamma_plus * norm_a * norm_a);
        (
            lead * (core + norm_ea * eta_norm),
            full_rank_case.then_some(lead * core),
        )
    };
    let bound = bound_full_rank.map_or(bound_general, |f| f.min(bound_general));
    Ok(LsPerturbationBound {
        cond_a,
        gamma_plus,
        norm_ea,
        norm_eb,
        norm_a,
        solution_norm,
        residual_norm,
        eta_norm,
        bound_general,
        bound_full_rank,
        bound,
        full_rank_case,
        valid,
        reason,
    })
}

/// Bounds on the identified system matrices under injected errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMatrixBound {
    pub method: Method,
    /// `σ_min([X_i; U_ii])` or `σ_min(Γ_i)`.
    pub sigma_min: f64,
    pub perturbation_norms: BTreeMap<String, f64>,
    /// `‖Θ̄‖` or `‖Ā‖`.
    pub theta_norm: f64,
    pub bounds: BTreeMap<String, f64>,
    pub valid: bool,
    pub reason: Option<String>,
    /// Full-rank case for the A/Θ bound (state: `rank = n + p`; shift: `rank Γ_i = n`).
    pub full_rank: bool,
}

fn margin_bound(numerator: f64, sigma_min: f64, e: f64) -> f64 {
    let gap = sigma_min - e;
    if gap > 0.0 {
        numerator / gap
    } else {
        f64::INFINITY
    }
}

/// Error bounds for `Θ = [A B; C D]` when `X_i` and `X_{i+1}` are replaced by
/// `X_i + E_{X_i}` and `X_{i+1} + E_{X_{i+1}}`.
pub fn bound_state_approach(
    base: &IdentificationResult,
    e_xi: &Matrix,
    e_xi_plus: &Matrix,
    rank_tol: f64,
) -> Result<SystemMatrixBound> {
    let SolveData::State { regressor, theta, .. } = &base.solve else {
        return Err(Error::InvalidInput("state bound needs a state-approach result".into()));
    };
    let n = base.order;
    let p = regressor.nrows() - n;
    if e_xi.shape() != base.core.xi.shape() || e_xi_plus.shape() != base.core.xi_plus.shape() {
        return Err(Error::Dimension("state perturbations must match X_i and X_(i+1)".into()));
    }
    let fr = linalg::svd(regressor)?;
    let rank = fr.rank(rank_tol);
    let sigma_min = if rank == 0 { 0.0 } else { fr.singular_values[rank - 1] };
    let cond = if sigma_min > 0.0 { fr.sigma_max() / sigma_min } else { f64::INFINITY };
    let perturbed = regressor + pad_rows(e_xi, regressor.nrows());
    let perturbed_rank = linalg::rank_with_tol(&perturbed, rank_tol)?;

    let exi = linalg::spectral_norm(e_xi);
    let exi_plus = linalg::spectral_norm(e_xi_plus);
    let theta_norm = linalg::spectral_norm(theta);
    let mut norms = BTreeMap::new();
    norms.insert("e_xi".to_string(), exi);
    norms.insert("e_xi_plus".to_string(), exi_plus);

    let full_rank = rank == n + p && perturbed_rank == n + p;
    let mut bounds = BTreeMap::new();
    bounds.insert(
        "theta_general".to_string(),
        margin_bound(exi_plus + (1.0 + cond) * exi * theta_norm, sigma_min, exi),
    );
    if full_rank {
        bounds.insert(
            "theta_full_rank".to_string(),
            margin_bound(exi * theta_norm + exi_plus, sigma_min, exi),
        );
        bounds.insert(
            "theta_frobenius".to_string(),
            margin_bound(
                ((n + p) as f64).sqrt() * (e_xi.norm() * theta.norm() + e_xi_plus.norm()),
                sigma_min,
                exi,
            ),
        );
    }

    let reason = if rank != perturbed_rank {
        Some(format!("rank changes from {rank} to {perturbed_rank}"))
    } else if exi >= sigma_min {
        Some("margin violated: ‖E_Xi‖ ≥ σ_min([X_i; U_ii])".to_string())
    } else {
        None
    };
    Ok(SystemMatrixBound {
        method: Method::State,
        sigma_min,
        perturbation_norms: norms,
        theta_norm,
        bounds,
        valid: reason.is_none(),
        reason,
        full_rank,
    })
}

fn pad_rows(top: &Matrix, rows: usize) -> Matrix {
    let mut out = Matrix::zeros(rows, top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out
}

/// Error bounds for `A`, `C` and `[D; B]` when `Γ_i`, `L` and `M` are replaced by
/// their perturbed versions.
///
/// `a_*` bounds use `σ_min(Γ_i)` as printed; `a_full_rank_under` uses
/// `σ_min(Γ̲_i)`, the singular value of the matrix actually inverted.
pub fn bound_shift_invariance(
    base: &IdentificationResult,
    e_gamma: &Matrix,
    e_l: &Matrix,
    e_m: &Matrix,
    rank_tol: f64,
) -> Result<SystemMatrixBound> {
    let SolveData::Shift { l, m_rhs, .. } = &base.solve else {
        return Err(Error::InvalidInput("shift bound needs a shift-invariance result".into()));
    };
    let gamma = &base.core.gamma_i;
    if e_gamma.shape() != gamma.shape() || e_l.shape() != l.shape() || e_m.shape() != m_rhs.shape() {
        return Err(Error::Dimension("shift perturbations must match Γ_i, L and M".into()));
    }
    let n = base.order;
    let m = base.model.m();
    let a_bar = base.model.a();

    let fg = linalg::svd(gamma)?;
    let rank = fg.rank(rank_tol);
    let sigma_min = if rank == 0 { 0.0 } else { fg.singular_values[rank - 1] };
    let cond = if sigma_min > 0.0 { fg.sigma_max() / sigma_min } else { f64::INFINITY };
    let perturbed_rank = linalg::rank_with_tol(&(gamma + e_gamma), rank_tol)?;
    let under_sigma = linalg::sigma_min_nonzero(&base.core.gamma_i_minus, rank_tol)?;

    let eg = linalg::spectral_norm(e_gamma);
    let theta_norm = linalg::spectral_norm(a_bar);
    let full_rank = rank == n && perturbed_rank == n;

    let mut norms = BTreeMap::new();
    norms.insert("e_gamma".to_string(), eg);
    norms.insert("e_l".to_string(), linalg::spectral_norm(e_l));
    norms.insert("e_m".to_string(), linalg::spectral_norm(e_m));

    let mut bounds = BTreeMap::new();
    bounds.insert(
        "a_general".to_string(),
        margin_bound(eg * (1.0 + (1.0 + cond) * theta_norm), sigma_min, eg),
    );
    if full_rank {
        bounds.insert(
            "a_full_rank".to_string(),
            margin_bound(eg * (1.0 + theta_norm), sigma_min, eg),
        );
        bounds.insert(
            "a_full_rank_under".to_string(),
            margin_bound(eg * (1.0 + theta_norm), under_sigma, eg),
        );
    }
    bounds.insert(
        "c_exact".to_string(),
        linalg::spectral_norm(&e_gamma.rows(0, m).into_owned()),
    );
    let ls = bound_least_squares(l, m_rhs, e_l, e_m, rank_tol)?;
    bounds.insert("bd_general".to_string(), ls.bound_general);
    if let Some(b) = ls.bound_full_rank {
        bounds.insert("bd_full_rank".to_string(), b);
    }

    let reason = if rank != perturbed_rank {
        Some(format!("rank of Γ_i changes from {rank} to {perturbed_rank}"))
    } else if eg >= sigma_min {
        Some("margin violated: ‖E_Γ‖ ≥ σ_min(Γ_i)".to_string())
    } else {
        ls.reason.map(|r| format!("B/D problem: {r}"))
    };
    Ok(SystemMatrixBound {
        method: Method::Shift,
        sigma_min,
        perturbation_norms: norms,
        theta_norm,
        bounds,
        valid: reason.is_none(),
        reason,
        full_rank,
    })
}

/// Hausdorff-distance bound on the poles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleBound {
    /// Spectral-norm bound on `‖Â − Ā‖`.
    pub delta: f64,
    pub n: usize,
    pub a_bar_frobenius: f64,
    pub coefficient: f64,
    pub bound: f64,
    pub relaxed_bound: f64,
}

/// `c_n · (√n Δ + ‖Ā‖_F)^{1−1/n} · Δ^{1/n}` with the exact and relaxed coefficients.
pub fn pole_bound(delta: f64, a_bar: &Matrix) -> Result<PoleBound> {
    if !a_bar.is_square() || a_bar.nrows() == 0 {
        return Err(Error::Dimension("pole bound needs a non-empty square Ā".into()));
    }
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::InvalidInput(format!("Δ must be non-negative, got {delta}")));
    }
    let n = a_bar.nrows();
    let nf = n as f64;
    let a_fro = a_bar.norm();
    let scale = (nf.sqrt() * delta + a_fro).powf(1.0 - 1.0 / nf) * delta.powf(1.0 / nf);
    let coefficient = spectral::elsner_coefficient(n);
    Ok(PoleBound {
        delta,
        n,
        a_bar_frobenius: a_fro,
        coefficient,
        bound: coefficient * scale,
        relaxed_bound: spectral::elsner_coefficient_relaxed(n) * scale,
    })
}

fn require_valid(smb: &SystemMatrixBound, method: Method) -> Result<()> {
    if smb.method != method {
        return Err(Error::InvalidInput(format!(
            "expected a {method} bound, got {}",
            smb.method
        )));
    }
    if !smb.valid {
        return Err(Error::InvalidInput(format!(
            "pole bound refused: {}",
            smb.reason.as_deref().unwrap_or("preconditions fail")
        )));
    }
    Ok(())
}

/// Pole bound with `Δ` the state-approach bound on `‖Θ̂ − Θ̄‖ ≥ ‖Â − Ā‖`.
pub fn bound_poles_state(smb: &SystemMatrixBound, a_bar: &Matrix) -> Result<PoleBound> {
    require_valid(smb, Method::State)?;
    let delta = smb
        .bounds
        .get("theta_full_rank")
        .or_else(|| smb.bounds.get("theta_general"))
        .copied()
        .ok_or_else(|| Error::InvalidInput("no Θ bound available".into()))?;
    pole_bound(delta, a_bar)
}

/// Pole bound with `Δ′ = ‖E_Γ‖(1 + ‖Ā‖)/(σ_min(Γ_i) − ‖E_Γ‖)`.
pub fn bound_poles_shift(smb: &SystemMatrixBound, a_bar: &Matrix) -> Result<PoleBound> {
    require_valid(smb, Method::Shift)?;
    let delta = smb
        .bounds
        .get("a_full_rank")
        .or_else(|| smb.bounds.get("a_general"))
        .copied()
        .ok_or_else(|| Error::InvalidInput("no A bound available".into()))?;
    pole_bound(delta, a_bar)
}

/// Gaussian matrix rescaled to spectral norm `scale`.
pub fn random_perturbation(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng));
    if scale == 0.0 || rows == 0 || cols == 0 {
        return Matrix::zeros(rows, cols);
    }
    let norm = linalg::spectral_norm(&g);
    g * (scale / norm)
}

/// Hankel sizes and tolerances for an injection trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub i: usize,
    pub j: usize,
    pub tols: Tolerances,
}

impl TrialConfig {
    /// `i = n + 2`, `j = 4i(m + p)`.
    pub fn for_model(model: &StateSpaceModel) -> Self {
        let i = model.n() + 2;
        Self {
            i,
            j: 4 * i * (model.m() + model.p()),
            tols: Tolerances::default(),
        }
    }
}

/// One row of a perturbation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub scale: f64,
    pub method: Method,
    pub measured: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, f64>,
    pub valid: bool,
    pub reason: Option<String>,
}

/// Measured quantity a named bound covers.
pub fn measured_key(bound: &str) -> Option<&'static str> {
    Some(match bound {
        "theta_general" | "theta_full_rank" => "theta",
        "theta_frobenius" => "theta_frobenius",
        "a_general" | "a_full_rank" | "a_full_rank_under" => "a",
        "c_exact" => "c",
        "bd_general" | "bd_full_rank" => "bd",
        "poles" | "poles_relaxed" => "poles",
        _ => return None,
    })
}

/// A bound that a valid trial exceeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub seed: u64,
    pub scale: f64,
    pub method: Method,
    pub bound_name: String,
    pub measured: f64,
    pub bound: f64,
}

pub fn exceeds(measured: f64, bound: f64) -> bool {
    measured > bound * (1.0 + SOUNDNESS_REL_SLACK) + SOUNDNESS_ABS_SLACK
}

impl TrialReport {
    pub fn violations(&self) -> Vec<Violation> {
        if !self.valid {
            return Vec::new();
        }
        self.bounds
            .iter()
            .filter_map(|(name, &bound)| {
                let measured = *self.measured.get(measured_key(name)?)?;
                exceeds(measured, bound).then(|| Violation {
                    seed: self.seed,
                    scale: self.scale,
                    method: self.method,
                    bound_name: name.clone(),
                    measured,
                    bound,
                })
            })
            .collect()
    }
}

pub fn collect_violations(reports: &[TrialReport]) -> Vec<Violation> {
    reports.iter().flat_map(TrialReport::violations).collect()
}

/// Noiseless identification result that injection trials perturb.
#[derive(Debug, Clone)]
pub struct PerturbationBaseline {
    pub truth: StateSpaceModel,
    pub result: IdentificationResult,
    pub config: TrialConfig,
}

impl PerturbationBaseline {
    pub fn build(model: &StateSpaceModel, cfg: &TrialConfig, method: Method, seed: u64) -> Result<Self> {
        let hcfg = HankelConfig::new(cfg.i, cfg.j)?;
        let u = lti::random_excitation(model.p(), hcfg.samples_needed(), seed ^ EXCITATION_SALT);
        let traj = lti::simulate(model, &DVector::zeros(model.n()), &u)?;
        let h = HankelSet::build(&traj, hcfg)?;
        let result = algorithms::identify(&h, &WeightingScheme::identity(), &cfg.tols, method)?;
        Ok(Self {
            truth: model.clone(),
            result,
            config: *cfg,
        })
    }

    /// Injects perturbations of spectral norm `scale`; the direction depends
    /// only on `seed`, so a sweep over scales moves along a fixed ray.
    pub fn trial(&self, scale: f64, seed: u64) -> Result<TrialReport> {
        if scale < 0.0 || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("perturbation scale must be ≥ 0, got {scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INJECTION_STREAM);
        let rank_tol = self.config.tols.rank_tol;
        let res = &self.result;
        let a_bar = res.model.a();
        let mut measured = BTreeMap::new();

        let (smb, a_hat) = match &res.solve {
            SolveData::State { regressor, target, theta } => {
                let n = res.order;
                let e_xi = random_perturbation(n, regressor.ncols(), scale, &mut rng);
                let e_xi_plus = random_perturbation(n, target.ncols(), scale, &mut rng);
                let smb = bound_state_approach(res, &e_xi, &e_xi_plus, rank_tol)?;
                let reg_hat = regressor + pad_rows(&e_xi, regressor.nrows());
                let tgt_hat = target + pad_rows(&e_xi_plus, target.nrows());
                let theta_hat = algorithms::solve_state_equations(&reg_hat, &tgt_hat, rank_tol)?;
                let diff = &theta_hat - theta;
                measured.insert("theta".to_string(), linalg::spectral_norm(&diff));
                measured.insert("theta_frobenius".to_string(), diff.norm());
                let a_hat = theta_hat.view((0, 0), (n, n)).into_owned();
                (smb, a_hat)
            }
            SolveData::Shift { l, m_rhs, db } => {
                let gamma = &res.core.gamma_i;
                let m = res.model.m();
                let e_gamma = random_perturbation(gamma.nrows(), gamma.ncols(), scale, &mut rng);
                let e_l = random_perturbation(l.nrows(), l.ncols(), scale, &mut rng);
                let e_m = random_perturbation(m_rhs.nrows(), m_rhs.ncols(), scale, &mut rng);
                let smb = bound_shift_invariance(res, &e_gamma, &e_l, &e_m, rank_tol)?;
                let gamma_hat = gamma + &e_gamma;
                let a_hat = algorithms::shift_a(&gamma_hat, m, rank_tol)?;
                let c_hat = gamma_hat.rows(0, m).into_owned();
                let db_hat = linalg::pinv(&(l + &e_l), rank_tol)? * (m_rhs + &e_m);
                measured.insert("a".to_string(), linalg::spectral_norm(&(&a_hat - a_bar)));
                measured.insert("c".to_string(), linalg::spectral_norm(&(c_hat - res.model.c())));
                measured.insert("bd".to_string(), linalg::spectral_norm(&(db_hat - db)));
                (smb, a_hat)
            }
        };
        measured.insert("poles".to_string(), spectral::pole_distance(&a_hat, a_bar)?);

        let mut bounds = smb.bounds.clone();
        if smb.valid {
            let pb = match smb.method {
                Method::State => bound_poles_state(&smb, a_bar)?,
                Method::Shift => bound_poles_shift(&smb, a_bar)?,
            };
            bounds.insert("poles".to_string(), pb.bound);
            bounds.insert("poles_relaxed".to_string(), pb.relaxed_bound);
        }
        Ok(TrialReport {
            seed,
            scale,
            method: res.method,
            measured,
            bounds,
            valid: smb.valid,
            reason: smb.reason,
        })
    }
}

/// Builds a baseline for `model` and runs one injection trial.
pub fn run_perturbation_trial(
    model: &StateSpaceModel,
    cfg: &TrialConfig,
    method: Method,
    scale: f64,
    seed: u64,
) -> Result<TrialReport> {
    PerturbationBaseline::build(model, cfg, method, seed)?.trial(scale, seed)
}

/// Parameters of a seeded perturbation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub method: Method,
    pub scales: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// For each trial seed `seed + t`, draws a model, builds its baseline and
/// runs every scale. Reports are sorted by seed, then scale.
pub fn run_perturbation_sweep(cfg: &SweepConfig) -> Result<Vec<TrialReport>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidInput("trials must be ≥ 1".into()));
    }
    let mut reports = Vec::with_capacity(cfg.trials * cfg.scales.len());
    for t in 0..cfg.trials as u64 {
        let seed = cfg.seed.wrapping_add(t);
        let model = lti::random_diagonal_model(&DiagonalModelSpec::new(cfg.n, cfg.m, cfg.p, seed))?;
        let baseline = PerturbationBaseline::build(&model, &TrialConfig::for_model(&model), cfg.method, seed)?;
        for &scale in &cfg.scales {
            reports.push(baseline.trial(scale, seed)?);
        }
    }
    reports.sort_by(|a, b| a.seed.cmp(&b.seed).then(a.scale.total_cmp(&b.scale)));
    Ok(reports)
}
