//! Discrete-time LTI state-space models: simulation, Markov parameters,
//! observability matrices and seeded random generators.
//!
//! Dimension names follow the identification literature used throughout the
//! crate: `n` states, `p` inputs, `m` outputs.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::Trajectory;
use crate::linalg::{self, Matrix};
use crate::spectral::{self, Spectrum};

/// Minimum gap between generated diagonal entries of `A`.
pub const EIGEN_SPACING: f64 = 1e-6;
/// Rank tolerance for the observability/controllability checks on generated models.
pub const MINIMALITY_TOL: f64 = 1e-10;
const MAX_REGENERATIONS: usize = 100;

/// `x_{k+1} = A x_k + B u_k`, `y_k = C x_k + D u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
}

impl StateSpaceModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square, got {:?}", a.shape())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B must have {n} rows, got {}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C must have {n} columns, got {}", c.ncols())));
        }
        if d.shape() != (c.nrows(), b.ncols()) {
            return Err(Error::Dimension(format!(
                "D must be {}x{}, got {:?}",
                c.nrows(),
                b.ncols(),
                d.shape()
            )));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&d, "D")] {
            linalg::ensure_finite(m, name)?;
        }
        Ok(Self { a, b, c, d })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn poles(&self) -> Result<Spectrum> {
        spectral::eigenvalues(&self.a)
    }

    /// `(T A T⁻¹, T B, C T⁻¹, D)`.
    pub fn similarity_transform(&self, t: &Matrix) -> Result<Self> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("similarity transform is singular".into()))?;
        Self::new(
            t * &self.a * &t_inv,
            t * &self.b,
            &self.c * &t_inv,
            self.d.clone(),
        )
    }
}

/// Runs the state recursion from `x0` over the columns of `inputs` (p x N).
pub fn simulate(model: &StateSpaceModel, x0: &DVector<f64>, inputs: &Matrix) -> Result<Trajectory> {
    if x0.len() != model.n() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, model has n = {}",
            x0.len(),
            model.n()
        )));
    }
    if inputs.nrows() != model.p() {
        return Err(Error::Dimension(format!(
            "inputs have {} channels, model has p = {}",
            inputs.nrows(),
            model.p()
        )));
    }
    let steps = inputs.ncols();
    let mut outputs = Matrix::zeros(model.m(), steps);
    let mut x = x0.clone();
    for k in 0..steps {
        let u = inputs.column(k);
        outputs.set_column(k, &(&model.c * &x + &model.d * u));
        x = &model.a * &x + &model.b * u;
    }
    Trajectory::new(inputs.clone(), outputs)
}

/// `(D, CB, CAB, …, CA^{count−2}B)`.
pub fn markov_parameters(model: &StateSpaceModel, count: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(model.d.clone());
    let mut ca = model.c.clone();
    for _ in 1..count {
        out.push(&ca * &model.b);
        ca = &ca * &model.a;
    }
    out
}

/// `[C; CA; …; CA^{i−1}]` for an arbitrary pair.
pub fn observability_stack(a: &Matrix, c: &Matrix, i: usize) -> Matrix {
    let m = c.nrows();
    let mut gamma = Matrix::zeros(i * m, a.ncols());
    let mut block = c.clone();
    for r in 0..i {
        gamma.rows_mut(r * m, m).copy_from(&block);
        block = &block * a;
    }
    gamma
}

pub fn extended_observability(model: &StateSpaceModel, i: usize) -> Matrix {
    observability_stack(&model.a, &model.c, i)
}

/// `[B, AB, …, A^{n−1}B]`.
pub fn controllability_matrix(model: &StateSpaceModel) -> Matrix {
    let (n, p) = (model.n(), model.p());
    let mut k = Matrix::zeros(n, n * p);
    let mut block = model.b.clone();
    for c in 0..n {
        k.columns_mut(c * p, p).copy_from(&block);
        block = &model.a * &block;
    }
    k
}

pub fn is_minimal(model: &StateSpaceModel, rank_tol: f64) -> Result<bool> {
    let n = model.n();
    Ok(linalg::rank_with_tol(&extended_observability(model, n), rank_tol)? == n
        && linalg::rank_with_tol(&controllability_matrix(model), rank_tol)? == n)
}

/// Parameters for a random model with diagonal `A`, distinct real poles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalModelSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub eigenvalue_range: (f64, f64),
    pub seed: u64,
}

impl DiagonalModelSpec {
    pub fn new(n: usize, m: usize, p: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            p,
            eigenvalue_range: (-1.0, 1.0),
            seed,
        }
    }
}

/// `n` uniform draws from `[lo, hi)` with pairwise gaps of at least `spacing`;
/// a colliding draw is discarded and redrawn.
pub fn sample_distinct_reals<R: Rng>(
    rng: &mut R,
    n: usize,
    (lo, hi): (f64, f64),
    spacing: f64,
) -> Result<Vec<f64>> {
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("bad sampling range [{lo}, {hi}]")));
    }
    let mut values: Vec<f64> = Vec::with_capacity(n);
    let mut draws = 0usize;
    while values.len() < n {
        draws += 1;
        if draws > 1000 * (n + 1) {
            return Err(Error::Generation(format!(
                "could not place {n} values {spacing} apart in [{lo}, {hi}]"
            )));
        }
        let v = rng.random_range(lo..hi);
        if values.iter().all(|w| (w - v).abs() >= spacing) {
            values.push(v);
        }
    }
    Ok(values)
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Seeded random minimal model: diagonal `A` with distinct poles drawn from
/// `eigenvalue_range`, `B`, `C`, `D` uniform on `[−1, 1]`.
pub fn random_diagonal_model(spec: &DiagonalModelSpec) -> Result<StateSpaceModel> {
    let DiagonalModelSpec { n, m, p, .. } = *spec;
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidInput(format!(
            "model dimensions must be positive, got n={n}, m={m}, p={p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..MAX_REGENERATIONS {
        let poles = sample_distinct_reals(&mut rng, n, spec.eigenvalue_range, EIGEN_SPACING)?;
        let a = Matrix::from_diagonal(&DVector::from_vec(poles));
        let b = uniform_matrix(&mut rng, n, p);
        let c = uniform_matrix(&mut rng, m, n);
        let d = uniform_matrix(&mut rng, m, p);
        let model = StateSpaceModel::new(a, b, c, d)?;
        if is_minimal(&model, MINIMALITY_TOL)? {
            return Ok(model);
        }
    }
    Err(Error::Generation(format!(
        "no observable and controllable model after {MAX_REGENERATIONS} attempts"
    )))
}

/// i.i.d. standard normal input sequence, p x length.
pub fn random_excitation(p: usize, length: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(p, length, |_, _| StandardNormal.sample(&mut rng))
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    m: usize,
    p: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>], rows_expected: usize, cols_expected: usize, name: &str) -> Result<Matrix> {
    if rows.len() != rows_expected || rows.iter().any(|r| r.len() != cols_expected) {
        return Err(Error::Dimension(format!(
            "{name} must be {rows_expected}x{cols_expected}"
        )));
    }
    Ok(Matrix::from_fn(rows_expected, cols_expected, |r, c| rows[r][c]))
}

impl StateSpaceModel {
    pub fn to_json_value(&self) -> serde_json::Value {
        let file = ModelFile {
            n: self.n(),
            m: self.m(),
            p: self.p(),
            a: matrix_to_rows(&self.a),
            b: matrix_to_rows(&self.b),
            c: matrix_to_rows(&self.c),
            d: matrix_to_rows(&self.d),
        };
        serde_json::to_value(file).expect("model serialises")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("model serialises")
    }

    /// Parses the model JSON layout; extra fields are ignored.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        Self::new(
            rows_to_matrix(&f.a, f.n, f.n, "A")?,
            rows_to_matrix(&f.b, f.n, f.p, "B")?,
            rows_to_matrix(&f.c, f.m, f.n, "C")?,
            rows_to_matrix(&f.d, f.m, f.p, "D")?,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}
