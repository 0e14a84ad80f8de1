//! Exact, distribution-aware quantities of a linear regression task.
//!
//! Under the generative model `y = x^T w* + eta` with `E xx^T = H` and
//! `Var(eta) = sigma^2`, the expected half squared prediction error is the
//! quadratic `J(w) = sigma^2/2 + (w - w*)^T (H/2) (w - w*)`. Everything here
//! is a closed-form function of that quadratic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::cholesky_factor;
use crate::error::{check_dim, check_stepsize, Error, Result};

/// Relative tolerance used when checking the symmetry of `E xx^T`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Ground-truth definition of a single regression task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    true_weights: DVector<f64>,
    second_moment: DMatrix<f64>,
    noise_variance: f64,
    cholesky: DMatrix<f64>,
}

impl TaskSpec {
    pub const DEFAULT_NOISE_VARIANCE: f64 = 1.0;

    /// Validates and builds a task. `second_moment` must be symmetric
    /// (to 1e-12 relative) and positive definite.
    pub fn new(
        true_weights: DVector<f64>,
        second_moment: DMatrix<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let dim = true_weights.len();
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        check_dim("second moment rows", dim, second_moment.nrows())?;
        check_dim("second moment columns", dim, second_moment.ncols())?;
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::InvalidNoiseVariance(noise_variance));
        }

        let scale = second_moment.amax().max(f64::MIN_POSITIVE);
        let asymmetry = (&second_moment - second_moment.transpose()).amax();
        if asymmetry.is_nan() || asymmetry > SYMMETRY_TOLERANCE * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let symmetric = (&second_moment + second_moment.transpose()) * 0.5;
        let cholesky = cholesky_factor(&symmetric)?;

        Ok(Self {
            true_weights,
            second_moment: symmetric,
            noise_variance,
            cholesky,
        })
    }

    /// The two-dimensional task used throughout the experiments:
    /// `E xx^T = diag(3, 1)`, `w* = (3, 5)`.
    pub fn setup_a(noise_variance: f64) -> Result<Self> {
        Self::new(
            DVector::from_vec(vec![3.0, 5.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])),
            noise_variance,
        )
    }

    pub fn dim(&self) -> usize {
        self.true_weights.len()
    }

    pub fn true_weights(&self) -> &DVector<f64> {
        &self.true_weights
    }

    /// `H = E xx^T`.
    pub fn second_moment(&self) -> &DMatrix<f64> {
        &self.second_moment
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Lower Cholesky factor of `H`, cached at construction.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    /// `J(w*)`, the irreducible cost.
    pub fn noise_floor(&self) -> f64 {
        0.5 * self.noise_variance
    }

    /// `E xy = H w*` under the generative model.
    pub fn cross_moment(&self) -> DVector<f64> {
        &self.second_moment * &self.true_weights
    }

    fn check_vector(&self, what: &'static str, v: &DVector<f64>) -> Result<()> {
        check_dim(what, self.dim(), v.len())
    }
}

/// Server-side weights of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub weights: DVector<f64>,
}

impl ModelState {
    pub fn new(weights: DVector<f64>) -> Self {
        Self { weights }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

impl From<DVector<f64>> for ModelState {
    fn from(weights: DVector<f64>) -> Self {
        Self { weights }
    }
}

/// Spectrum of `H` together with the contraction factor for a stepsize.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInfo {
    /// Eigenvalues of `H`, nondecreasing.
    pub eigenvalues: DVector<f64>,
    /// `max_i (1 - eps * lambda_i)^2`.
    pub contraction: f64,
    /// `Sigma_x = H / 2`.
    pub half_moment: DMatrix<f64>,
    pub stepsize: f64,
}

/// `J(w) = sigma^2/2 + (w - w*)^T (H/2) (w - w*)`.
pub fn exact_objective(task: &TaskSpec, w: &ModelState) -> Result<f64> {
    task.check_vector("weights", &w.weights)?;
    let d = &w.weights - task.true_weights();
    Ok(task.noise_floor() + 0.5 * d.dot(&(task.second_moment() * &d)))
}

/// `grad J(w) = H (w - w*)`.
pub fn exact_gradient(task: &TaskSpec, w: &ModelState) -> Result<DVector<f64>> {
    task.check_vector("weights", &w.weights)?;
    Ok(task.second_moment() * (&w.weights - task.true_weights()))
}

/// Change in the true cost if the update `w - eps * g` were applied:
/// `-eps g^T grad J(w) + eps^2/2 g^T H g`. Exact because `J` is quadratic.
pub fn exact_gain(task: &TaskSpec, w: &ModelState, g: &DVector<f64>, stepsize: f64) -> Result<f64> {
    check_stepsize(stepsize)?;
    task.check_vector("update direction", g)?;
    let grad = exact_gradient(task, w)?;
    let curvature = g.dot(&(task.second_moment() * g));
    Ok(-stepsize * g.dot(&grad) + 0.5 * stepsize * stepsize * curvature)
}

/// Eigenvalues of `H`, ascending.
pub fn eigenvalues(task: &TaskSpec) -> DVector<f64> {
    let eig = SymmetricEigen::new(task.second_moment().clone());
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    DVector::from_vec(values)
}

pub fn contraction_factor(task: &TaskSpec, stepsize: f64) -> Result<SpectralInfo> {
    check_stepsize(stepsize)?;
    let eigenvalues = eigenvalues(task);
    let contraction = eigenvalues
        .iter()
        .map(|l| (1.0 - stepsize * l).powi(2))
        .fold(0.0, f64::max);
    Ok(SpectralInfo {
        eigenvalues,
        contraction,
        half_moment: task.second_moment() * 0.5,
        stepsize,
    })
}

/// `2 / lambda_max(H)`: gradient descent converges for any stepsize below this.
pub fn max_stepsize(task: &TaskSpec) -> f64 {
    let eigenvalues = eigenvalues(task);
    2.0 / eigenvalues[eigenvalues.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag31(noise: f64) -> TaskSpec {
        TaskSpec::setup_a(noise).unwrap()
    }

    fn identity(w_star: [f64; 2], noise: f64) -> TaskSpec {
        TaskSpec::new(DVector::from_row_slice(&w_star), DMatrix::identity(2, 2), noise).unwrap()
    }

    fn state(v: [f64; 2]) -> ModelState {
        ModelState::new(DVector::from_row_slice(&v))
    }

    #[test]
    fn objective_examples() {
        let task = diag31(1.0);
        assert_relative_eq!(exact_objective(&task, &state([0.0, 0.0])).unwrap(), 26.5, max_relative = 1e-15);
        assert_eq!(exact_objective(&task, &state([3.0, 5.0])).unwrap(), 0.5);
        let task = identity([0.0, 0.0], 0.0);
        assert_eq!(exact_objective(&task, &state([1.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn gradient_examples() {
        let task = diag31(1.0);
        let g = exact_gradient(&task, &state([0.0, 0.0])).unwrap();
        assert_eq!(g.as_slice(), &[-9.0, -5.0]);
        let g = exact_gradient(&task, &state([3.0, 5.0])).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
        let task = identity([1.0, 0.0], 1.0);
        let g = exact_gradient(&task, &state([2.0, 0.0])).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn gain_examples() {
        let task = diag31(1.0);
        let w = state([0.0, 0.0]);
        let g = DVector::from_row_slice(&[-9.0, -5.0]);
        let gain = exact_gain(&task, &w, &g, 0.1).unwrap();
        assert_relative_eq!(gain, -9.26, max_relative = 1e-12);
        // J((0.9, 0.5)) - J(0) = 17.24 - 26.5
        let moved = exact_objective(&task, &state([0.9, 0.5])).unwrap();
        assert_relative_eq!(moved, 17.24, max_relative = 1e-12);
        assert_relative_eq!(gain, moved - 26.5, max_relative = 1e-12);

        assert_eq!(exact_gain(&task, &w, &DVector::zeros(2), 0.1).unwrap(), 0.0);

        let at_opt = state([3.0, 5.0]);
        let g = DVector::from_row_slice(&[1.0, -2.0]);
        let gain = exact_gain(&task, &at_opt, &g, 0.3).unwrap();
        assert_relative_eq!(gain, 0.5 * 0.09 * (3.0 + 4.0), max_relative = 1e-12);
        assert!(gain > 0.0);
    }

    #[test]
    fn contraction_examples() {
        let task = diag31(1.0);
        let info = contraction_factor(&task, 0.1).unwrap();
        assert_relative_eq!(info.contraction, 0.81, max_relative = 1e-12);
        assert_relative_eq!(info.eigenvalues[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(info.eigenvalues[1], 3.0, max_relative = 1e-12);
        assert_eq!(info.half_moment, DMatrix::from_diagonal(&DVector::from_vec(vec![1.5, 0.5])));

        let info = contraction_factor(&task, 2.0 / 3.0).unwrap();
        assert_relative_eq!(info.contraction, 1.0, max_relative = 1e-12);

        let task = TaskSpec::new(DVector::zeros(3), DMatrix::identity(3, 3), 1.0).unwrap();
        assert_eq!(contraction_factor(&task, 1.0).unwrap().contraction, 0.0);

        assert!(matches!(contraction_factor(&task, 0.0), Err(Error::InvalidStepsize(_))));
    }

    #[test]
    fn max_stepsize_examples() {
        assert_relative_eq!(max_stepsize(&diag31(1.0)), 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(max_stepsize(&identity([0.0, 0.0], 1.0)), 2.0, max_relative = 1e-12);
        let task = TaskSpec::new(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0])),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(max_stepsize(&task), 0.2, max_relative = 1e-12);
    }

    #[test]
    fn rejects_malformed_tasks() {
        let w = DVector::zeros(2);
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(matches!(TaskSpec::new(w.clone(), asym, 1.0), Err(Error::NotSymmetric { .. })));

        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            TaskSpec::new(w.clone(), indefinite, 1.0),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));

        assert!(matches!(
            TaskSpec::new(w.clone(), DMatrix::identity(3, 3), 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            TaskSpec::new(w.clone(), DMatrix::identity(2, 2), -1.0),
            Err(Error::InvalidNoiseVariance(_))
        ));
        assert!(matches!(
            TaskSpec::new(DVector::zeros(0), DMatrix::zeros(0, 0), 1.0),
            Err(Error::ZeroDimension)
        ));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let task = diag31(1.0);
        let w = ModelState::zeros(3);
        assert!(matches!(exact_objective(&task, &w), Err(Error::DimensionMismatch { .. })));
        assert!(exact_gradient(&task, &w).is_err());
        assert!(exact_gain(&task, &ModelState::zeros(2), &DVector::zeros(3), 0.1).is_err());
    }
}
