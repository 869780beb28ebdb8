//! How badly conditioned the extended observability matrix must be.
//!
//! Covers the singular-value decay bound for Krylov-structured matrices
//! `[J, DJ, …, D^{m−1}J]`, the resulting lower bound on `cond(Γ_i)`, and a
//! seeded Monte Carlo runner that samples random diagonal systems and records
//! `cond(Γ_n)` next to the bound.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::lti;

/// `e^{π²/4}`
pub fn rho() -> f64 {
    (std::f64::consts::PI * std::f64::consts::PI / 4.0).exp()
}

fn gamma_exponent(n: usize, m: usize) -> i32 {
    ((n - 1) / (2 * m)) as i32
}

/// Upper bound `4ρ^{−⌊(n−1)/(2m)⌋}‖Γ_i‖` on `σ_n(Γ_i)`.
pub fn sigma_min_bound_gamma(n: usize, m: usize, gamma_norm: f64) -> Result<f64> {
    check_nm(n, m)?;
    Ok(4.0 * rho().powi(-gamma_exponent(n, m)) * gamma_norm)
}

/// Lower bound `ρ^{⌊(n−1)/(2m)⌋} / 4` on `cond(Γ_i)`.
pub fn cond_lower_bound_gamma(n: usize, m: usize) -> Result<f64> {
    check_nm(n, m)?;
    Ok(rho().powi(gamma_exponent(n, m)) / 4.0)
}

fn check_nm(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput(format!("need n, m ≥ 1, got n={n}, m={m}")));
    }
    Ok(())
}

/// `[J, DJ, …, D^{blocks−1}J]` with `J` of size n x p and `D` n x n.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovStructured {
    pub n: usize,
    pub blocks: usize,
    pub p: usize,
    pub jp: Matrix,
    pub d: Matrix,
    pub assembled: Matrix,
}

impl KrylovStructured {
    pub fn new(jp: Matrix, d: Matrix, blocks: usize) -> Result<Self> {
        let (n, p) = jp.shape();
        if d.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "D must be {n}x{n}, got {:?}",
                d.shape()
            )));
        }
        if n == 0 || p == 0 || blocks == 0 {
            return Err(Error::InvalidInput("Krylov matrix needs n, p, blocks ≥ 1".into()));
        }
        if p > n {
            return Err(Error::InvalidInput(format!("block width p = {p} exceeds n = {n}")));
        }
        let mut assembled = Matrix::zeros(n, blocks * p);
        let mut block = jp.clone();
        for c in 0..blocks {
            assembled.columns_mut(c * p, p).copy_from(&block);
            block = &d * block;
        }
        Ok(Self {
            n,
            blocks,
            p,
            jp,
            d,
            assembled,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovCheck {
    pub sigma_min: f64,
    pub norm: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `[p]_*`: 1 for odd `p > 1`, else 0.
pub fn odd_width_correction(p: usize) -> usize {
    usize::from(p > 1 && p % 2 == 1)
}

/// Decay exponent `⌊(min{n, mq} − 1)/(2q)⌋ / ln(2mp)` with `q = p − [p]_*`.
pub fn krylov_exponent(n: usize, blocks: usize, p: usize) -> f64 {
    let q = p - odd_width_correction(p);
    let k = (n.min(blocks * q) - 1) / (2 * q);
    k as f64 / ((2 * blocks * p) as f64).ln()
}

/// Checks `σ_min(X) ≤ 4ρ^{−κ}‖X‖` for a Krylov-structured `X` with diagonal `D`.
///
/// `σ_min` is the smallest of the `min(n, mp)` singular values.
pub fn verify_krylov_sigma_bound(k: &KrylovStructured) -> Result<KrylovCheck> {
    let n = k.n;
    let off_diagonal = (0..n).any(|r| (0..n).any(|c| r != c && k.d[(r, c)] != 0.0));
    if off_diagonal {
        return Err(Error::Unsupported(
            "only diagonal D is supported; diagonalise beforehand".into(),
        ));
    }
    let f = linalg::svd(&k.assembled)?;
    let sigma_min = *f.singular_values.last().unwrap_or(&0.0);
    let norm = f.sigma_max();
    let bound = 4.0 * rho().powf(-krylov_exponent(n, k.blocks, k.p)) * norm;
    Ok(KrylovCheck {
        sigma_min,
        norm,
        bound,
        holds: sigma_min <= bound,
    })
}

/// One sampled `Γ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningSample {
    pub trial: usize,
    /// `σ_1/σ_n`, infinite when censored.
    pub cond: f64,
    pub sigma_min: f64,
    pub gamma_norm: f64,
    /// `σ_n` fell below `n·ε·σ_1` and is not resolved in double precision.
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub n: usize,
    pub m: usize,
    pub i: usize,
    pub trials: usize,
    pub samples: Vec<ConditioningSample>,
    pub theoretical_lower_bound: f64,
    pub rho: f64,
}

impl ConditioningReport {
    pub fn cond_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.cond).collect()
    }

    /// Fraction of samples with `cond ≥` the lower bound; censored samples count as above.
    pub fn fraction_above_bound(&self) -> f64 {
        let ok = self
            .samples
            .iter()
            .filter(|s| s.censored || s.cond >= self.theoretical_lower_bound)
            .count();
        ok as f64 / self.samples.len() as f64
    }

    /// Fraction of samples with `σ_n ≤ 4ρ^{−⌊(n−1)/(2m)⌋}‖Γ_n‖`.
    pub fn fraction_sigma_bound(&self) -> f64 {
        let factor = 4.0 * self.rho.powi(-gamma_exponent(self.n, self.m));
        let ok = self
            .samples
            .iter()
            .filter(|s| s.sigma_min <= factor * s.gamma_norm)
            .count();
        ok as f64 / self.samples.len() as f64
    }

    /// Fraction of samples meeting the Krylov decay bound with its log scaling,
    /// reading `Γ_nᵀ` as `[Cᵀ, ACᵀ, …]` with `i` blocks of width `m`.
    pub fn fraction_krylov_bound(&self) -> f64 {
        let factor = 4.0 * self.rho.powf(-krylov_exponent(self.n, self.i, self.m));
        let ok = self
            .samples
            .iter()
            .filter(|s| s.sigma_min <= factor * s.gamma_norm)
            .count();
        ok as f64 / self.samples.len() as f64
    }

    pub fn censored_count(&self) -> usize {
        self.samples.iter().filter(|s| s.censored).count()
    }

    /// Quantiles of the sampled condition numbers.
    pub fn quantiles(&self, probs: &[f64]) -> Vec<f64> {
        let mut sorted = self.cond_samples();
        sorted.sort_by(f64::total_cmp);
        probs.iter().map(|&q| quantile_sorted(&sorted, q)).collect()
    }

    pub fn median(&self) -> f64 {
        self.quantiles(&[0.5])[0]
    }
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi || frac == 0.0 || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Samples `trials` single-output systems of order `n` and records `cond(Γ_n)`.
///
/// Trial `t` draws from a ChaCha8 stream seeded with `seed + t` on stream `n`:
/// distinct diagonal `A` entries and a row `C`, both uniform on `[−1, 1]`.
pub fn sample_gamma_conditioning(n: usize, trials: usize, seed: u64) -> Result<ConditioningReport> {
    check_nm(n, 1)?;
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be ≥ 1".into()));
    }
    let mut samples = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        rng.set_stream(n as u64);
        let poles = lti::sample_distinct_reals(&mut rng, n, (-1.0, 1.0), lti::EIGEN_SPACING)?;
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(poles));
        let c = Matrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
        let gamma = lti::observability_stack(&a, &c, n);
        let f = linalg::svd(&gamma)?;
        let sigma_1 = f.sigma_max();
        let sigma_n = f.singular_values[n - 1];
        let censored = sigma_n <= n as f64 * f64::EPSILON * sigma_1;
        let cond = if censored { f64::INFINITY } else { (sigma_1 / sigma_n).max(1.0) };
        samples.push(ConditioningSample {
            trial: t,
            cond,
            sigma_min: sigma_n,
            gamma_norm: sigma_1,
            censored,
        });
    }
    Ok(ConditioningReport {
        n,
        m: 1,
        i: n,
        trials,
        samples,
        theoretical_lower_bound: cond_lower_bound_gamma(n, 1)?,
        rho: rho(),
    })
}

/// One report per `n` in `n_min..=n_max` with `m = 1` and `i = n`.
pub fn run_conditioning_sweep(n_min: usize, n_max: usize, trials: usize, seed: u64) -> Result<Vec<ConditioningReport>> {
    if n_min == 0 || n_min > n_max {
        return Err(Error::InvalidInput(format!(
            "need 1 ≤ n_min ≤ n_max, got {n_min}..={n_max}"
        )));
    }
    (n_min..=n_max)
        .map(|n| sample_gamma_conditioning(n, trials, seed))
        .collect()
}

/// `n,trial,cond,lower_bound`; censored samples are written as `inf`.
pub fn write_samples_csv<W: Write>(out: &mut W, reports: &[ConditioningReport]) -> Result<()> {
    writeln!(out, "n,trial,cond,lower_bound")?;
    for r in reports {
        for s in &r.samples {
            writeln!(out, "{},{},{},{}", r.n, s.trial, s.cond, r.theoretical_lower_bound)?;
        }
    }
    Ok(())
}

/// `n,q05,q25,q50,q75,q95,lower_bound`
pub fn write_summary_csv<W: Write>(out: &mut W, reports: &[ConditioningReport]) -> Result<()> {
    writeln!(out, "n,q05,q25,q50,q75,q95,lower_bound")?;
    for r in reports {
        let q = r.quantiles(&[0.05, 0.25, 0.5, 0.75, 0.95]);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n, q[0], q[1], q[2], q[3], q[4], r.theoretical_lower_bound
        )?;
    }
    Ok(())
}

pub fn save_samples_csv(path: impl AsRef<Path>, reports: &[ConditioningReport]) -> Result<()> {
    let mut buf = Vec::new();
    write_samples_csv(&mut buf, reports)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn save_summary_csv(path: impl AsRef<Path>, reports: &[ConditioningReport]) -> Result<()> {
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, reports)?;
    std::fs::write(path, buf)?;
    Ok(())
}
