//! Seeded synthetic data: Gaussian features with second moment `H` and
//! labels `y = x^T w* + eta`.
//!
//! All randomness flows through [`RngStream`], a ChaCha20 generator keyed by
//! a 64-bit master seed and positioned on an independent 64-bit stream.
//! Normal variates use the Marsaglia polar method on 53-bit uniforms, so the
//! output is bit-for-bit reproducible for a fixed build.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{check_dim, Error, Result};
use crate::model::TaskSpec;

/// Name of the generator behind every [`RngStream`].
pub const RNG_ALGORITHM: &str = "chacha20";

/// Low bits of the stream index reserved for the lane (task) number.
pub const LANE_BITS: u32 = 20;

/// Lane used by policies that need their own randomness.
pub const POLICY_LANE: u64 = (1 << LANE_BITS) - 1;

/// Lower Cholesky factor `L` with `L L^T = matrix`.
///
/// Only the lower triangle of `matrix` is read.
pub fn cholesky_factor(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = matrix.nrows();
    check_dim("cholesky columns", n, matrix.ncols())?;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = matrix[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let mut s = matrix[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(l)
}

/// A reproducible stream of random numbers identified by
/// `(master_seed, stream_index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha20Rng,
    master_seed: u64,
    stream_index: u64,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            rng,
            master_seed,
            stream_index,
            spare_normal: None,
        }
    }

    /// Stream for `lane` (usually a task index) of Monte Carlo run `run`.
    pub fn for_lane(master_seed: u64, run: u64, lane: u64) -> Self {
        assert!(lane < (1 << LANE_BITS), "lane index {lane} out of range");
        assert!(run < (1 << (64 - LANE_BITS)), "run index {run} out of range");
        Self::new(master_seed, (run << LANE_BITS) | lane)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * factor);
                return u * factor;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `N` feature/label pairs; row `i` of `features` is `x_i^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    features: DMatrix<f64>,
    labels: DVector<f64>,
}

impl DataBatch {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyBatch);
        }
        check_dim("batch labels", features.nrows(), labels.len())?;
        Ok(Self { features, labels })
    }

    /// Builds a batch from `(x, y)` rows.
    pub fn from_rows(rows: &[(&[f64], f64)]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyBatch)?;
        let dim = first.0.len();
        let mut features = DMatrix::zeros(rows.len(), dim);
        for (i, (x, _)) in rows.iter().enumerate() {
            check_dim("batch row", dim, x.len())?;
            features.row_mut(i).copy_from_slice(x);
        }
        let labels = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        Self::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    /// Writes the batch as CSV with header `x_1,...,x_n,y`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x_{i}")).collect();
        writeln!(out, "{},y", header.join(","))?;
        for (row, y) in self.features.row_iter().zip(self.labels.iter()) {
            for x in row.iter() {
                write!(out, "{x},")?;
            }
            writeln!(out, "{y}")?;
        }
        Ok(())
    }
}

/// Draws `count` i.i.d. samples `x = L z`, `y = x^T w* + sigma * e`.
///
/// Per sample the stream yields `n` normals for `z` followed by one for the
/// label noise, regardless of the noise variance.
pub fn sample_batch(task: &TaskSpec, count: usize, rng: &mut RngStream) -> Result<DataBatch> {
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let n = task.dim();
    let chol = task.cholesky();
    let sigma = task.noise_variance().sqrt();
    let mut features = DMatrix::zeros(count, n);
    let mut labels = DVector::zeros(count);
    let mut z = DVector::zeros(n);
    for i in 0..count {
        for zj in z.iter_mut() {
            *zj = rng.standard_normal();
        }
        let x = chol * &z;
        let noise = rng.standard_normal();
        labels[i] = x.dot(task.true_weights()) + sigma * noise;
        features.row_mut(i).tr_copy_from(&x);
    }
    Ok(DataBatch { features, labels })
}

/// A random well-conditioned task: `H = A A^T / n + 0.25 I` with standard
/// normal `A`, and `w*` with independent `N(0, 4)` entries.
pub fn random_task(dim: usize, noise_variance: f64, rng: &mut RngStream) -> Result<TaskSpec> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.standard_normal());
    let h = (&a * a.transpose()) / dim as f64 + DMatrix::identity(dim, dim) * 0.25;
    let h = (&h + h.transpose()) * 0.5;
    let w = DVector::from_fn(dim, |_, _| 2.0 * rng.standard_normal());
    TaskSpec::new(w, h, noise_variance)
}
