//! Input/output trajectories and the block Hankel matrices built from them.
//!
//! Index convention: `U_{a,b,j}` has first column `(u_a, …, u_b)` and `j`
//! columns, so block `(r, c)` holds `u_{a+r+c}`.

mod csv;

pub use self::csv::{
    load_matrix_csv, load_trajectory_csv, parse_matrix_csv, parse_trajectory_csv,
    save_trajectory_csv, write_matrix_csv, write_trajectory_csv,
};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Finite sample `{(u_k, y_k) : 0 <= k <= s}`.
///
/// Samples are stored column-wise: `inputs` is p x (s+1), `outputs` is m x (s+1).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    inputs: Matrix,
    outputs: Matrix,
}

impl Trajectory {
    pub fn new(inputs: Matrix, outputs: Matrix) -> Result<Self> {
        if inputs.ncols() != outputs.ncols() {
            return Err(Error::Dimension(format!(
                "trajectory has {} input samples but {} output samples",
                inputs.ncols(),
                outputs.ncols()
            )));
        }
        if inputs.ncols() == 0 {
            return Err(Error::InvalidInput("trajectory needs at least one sample".into()));
        }
        linalg::ensure_finite(&inputs, "inputs")?;
        linalg::ensure_finite(&outputs, "outputs")?;
        Ok(Self { inputs, outputs })
    }

    /// Input dimension.
    pub fn p(&self) -> usize {
        self.inputs.nrows()
    }

    /// Output dimension.
    pub fn m(&self) -> usize {
        self.outputs.nrows()
    }

    /// Number of samples, `s + 1`.
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the last sample.
    pub fn s(&self) -> usize {
        self.len() - 1
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn outputs(&self) -> &Matrix {
        &self.outputs
    }
}

/// Hankel indices: `i` block rows per past/future half, `j` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HankelConfig {
    pub i: usize,
    pub j: usize,
}

impl HankelConfig {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i == 0 || j == 0 {
            return Err(Error::InvalidInput(format!(
                "hankel indices must be positive, got i={i}, j={j}"
            )));
        }
        Ok(Self { i, j })
    }

    /// Uses every sample: `j = s - 2i + 1`.
    pub fn use_all_samples(i: usize, samples: usize) -> Result<Self> {
        if samples < 2 * i + 1 {
            return Err(Error::OutOfRange(format!(
                "{samples} samples cannot hold 2i = {} block rows and one column",
                2 * i
            )));
        }
        Self::new(i, samples - 2 * i)
    }

    /// Number of samples the configuration consumes, `2i + j - 1`.
    pub fn samples_needed(&self) -> usize {
        2 * self.i + self.j - 1
    }
}

/// `(last - first + 1)·dim x j` block Hankel matrix over the columns of `seq`.
pub fn block_hankel(seq: &Matrix, first: usize, last: usize, j: usize) -> Result<Matrix> {
    if last < first {
        return Err(Error::OutOfRange(format!(
            "hankel block range {first}..={last} is empty"
        )));
    }
    if last + j > seq.ncols() {
        return Err(Error::OutOfRange(format!(
            "hankel block {first}..={last} with {j} columns needs sample {} but only {} exist",
            last + j - 1,
            seq.ncols()
        )));
    }
    let dim = seq.nrows();
    let blocks = last - first + 1;
    let mut h = Matrix::zeros(blocks * dim, j);
    for r in 0..blocks {
        for c in 0..j {
            h.view_mut((r * dim, c), (dim, 1))
                .copy_from(&seq.column(first + r + c));
        }
    }
    Ok(h)
}

fn block_hankel_or_empty(seq: &Matrix, first: usize, last: usize, j: usize) -> Result<Matrix> {
    if last < first {
        Ok(Matrix::zeros(0, j))
    } else {
        block_hankel(seq, first, last, j)
    }
}

/// Past/future Hankel partitions of a single trajectory.
#[derive(Debug, Clone)]
pub struct HankelSet {
    pub config: HankelConfig,
    pub p: usize,
    pub m: usize,
    pub up: Matrix,
    pub uf: Matrix,
    pub yp: Matrix,
    pub yf: Matrix,
    pub up_plus: Matrix,
    pub uf_minus: Matrix,
    pub yp_plus: Matrix,
    pub yf_minus: Matrix,
    pub wp: Matrix,
    pub wp_plus: Matrix,
    /// `U_{i,i,j}`
    pub uii: Matrix,
    /// `Y_{i,i,j}`
    pub yii: Matrix,
}

impl HankelSet {
    pub fn build(traj: &Trajectory, cfg: HankelConfig) -> Result<Self> {
        let HankelConfig { i, j } = cfg;
        if i == 0 || j == 0 {
            return Err(Error::InvalidInput("hankel indices must be positive".into()));
        }
        if cfg.samples_needed() > traj.len() {
            return Err(Error::OutOfRange(format!(
                "i={i}, j={j} needs {} samples (s >= {}), trajectory has {}",
                cfg.samples_needed(),
                cfg.samples_needed() - 1,
                traj.len()
            )));
        }
        let u = traj.inputs();
        let y = traj.outputs();

        let up = block_hankel(u, 0, i - 1, j)?;
        let uf = block_hankel(u, i, 2 * i - 1, j)?;
        let yp = block_hankel(y, 0, i - 1, j)?;
        let yf = block_hankel(y, i, 2 * i - 1, j)?;
        let up_plus = block_hankel(u, 0, i, j)?;
        let yp_plus = block_hankel(y, 0, i, j)?;
        let uf_minus = block_hankel_or_empty(u, i + 1, 2 * i - 1, j)?;
        let yf_minus = block_hankel_or_empty(y, i + 1, 2 * i - 1, j)?;
        let wp = linalg::vstack(&[&up, &yp])?;
        let wp_plus = linalg::vstack(&[&up_plus, &yp_plus])?;
        let uii = block_hankel(u, i, i, j)?;
        let yii = block_hankel(y, i, i, j)?;

        Ok(Self {
            config: cfg,
            p: traj.p(),
            m: traj.m(),
            up,
            uf,
            yp,
            yf,
            up_plus,
            uf_minus,
            yp_plus,
            yf_minus,
            wp,
            wp_plus,
            uii,
            yii,
        })
    }
}

/// Persistency of excitation of order 2i: `U_{0,2i-1,j} U_{0,2i-1,j}ᵀ` has rank 2ip.
///
/// Advisory only; identification proceeds regardless.
pub fn is_persistently_exciting(traj: &Trajectory, cfg: HankelConfig, rank_tol: f64) -> Result<bool> {
    let u = block_hankel(traj.inputs(), 0, 2 * cfg.i - 1, cfg.j)?;
    let gram = &u * u.transpose();
    Ok(linalg::rank_with_tol(&gram, rank_tol)? == 2 * cfg.i * traj.p())
}
