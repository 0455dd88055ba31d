//! Plain and cluster-constrained principal directions.
//!
//! The constrained problem minimizes the reconstruction error
//! `R(U) = tr((I - UU^T) Sigma (I - UU^T))` subject to every column of `U`
//! lying in the span of the cluster indicator matrix `H`, by alternating a
//! gradient step with the projection `U <- H H^T U`.
//!
//! After the first projection every iterate has the form `U = H Y` with `Y` a
//! `K_c x K` matrix, and `R(HY)` only depends on `H^T Sigma H`. The loop
//! therefore runs in those reduced coordinates; each step is algebraically
//! identical to the full-space step followed by the projection.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::cluster::IndicatorMatrix;
use crate::error::{Error, Result};
use crate::linalg::CovarianceOp;

/// `K` principal directions with the eigenvalues used to whiten them.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalBasis {
    /// `m x K`, unit-norm columns.
    pub directions: DMatrix<f64>,
    /// Descending; for informed bases these are the plain-PCA eigenvalues.
    pub eigenvalues: DVector<f64>,
    /// Whether the directions were constrained to a cluster subspace.
    pub informed: bool,
    pub iterations_run: usize,
    pub final_gradient_norm: f64,
    /// Reconstruction error after the initial projection and after every iteration.
    pub objective_history: Vec<f64>,
}

impl PrincipalBasis {
    pub fn dim(&self) -> usize {
        self.directions.nrows()
    }

    pub fn rank(&self) -> usize {
        self.directions.ncols()
    }
}

/// Leading `k` eigenpairs of `sigma`.
pub fn pca_top_k<S: CovarianceOp + ?Sized>(sigma: &S, k: usize) -> Result<PrincipalBasis> {
    if k == 0 {
        return Err(Error::InvalidArgument("at least one direction is required".into()));
    }
    let evd = sigma.top_eigenpairs(k)?;
    Ok(PrincipalBasis {
        directions: evd.eigenvectors,
        eigenvalues: evd.eigenvalues,
        informed: false,
        iterations_run: 0,
        final_gradient_norm: 0.0,
        objective_history: Vec::new(),
    })
}

/// `H H^T U`: each column replaced by its cluster-wise means.
pub fn project_onto_cluster_subspace(u: &DMatrix<f64>, h: &IndicatorMatrix) -> Result<DMatrix<f64>> {
    h.project(u)
}

fn check_dims<S: CovarianceOp + ?Sized>(u: &DMatrix<f64>, sigma: &S) -> Result<()> {
    if u.nrows() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: (sigma.dim(), u.ncols()),
            found: u.shape(),
        });
    }
    Ok(())
}

/// `tr(Sigma) - 2 tr(U^T Sigma U) + tr(U^T U U^T Sigma U)`, from `tr(Sigma)`, `U^T U` and `U^T Sigma U`.
fn objective_from_parts(trace: f64, gram: &DMatrix<f64>, quad: &DMatrix<f64>) -> f64 {
    let cross: f64 = gram.component_mul(quad).sum();
    (trace - 2.0 * quad.trace() + cross).max(0.0)
}

/// `E ||c - U U^T c||^2 = tr((I - UU^T) Sigma (I - UU^T)^T)`.
pub fn reconstruction_error<S: CovarianceOp + ?Sized>(u: &DMatrix<f64>, sigma: &S) -> Result<f64> {
    check_dims(u, sigma)?;
    let su = sigma.apply(u);
    let quad = u.transpose() * &su;
    let gram = u.transpose() * u;
    Ok(objective_from_parts(sigma.trace(), &gram, &quad))
}

/// `-2((I - UU^T) Sigma + Sigma (I - UU^T)) U`.
pub fn pca_gradient<S: CovarianceOp + ?Sized>(u: &DMatrix<f64>, sigma: &S) -> Result<DMatrix<f64>> {
    check_dims(u, sigma)?;
    let su = sigma.apply(u);
    let quad = u.transpose() * &su;
    let gram = u.transpose() * u;
    Ok((&su * 2.0 - u * quad - &su * gram) * -2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Armijo backtracking: halve a trial step until the objective drops by
    /// `1e-4 * alpha * |g|^2`. The trial step is the Barzilai-Borwein step once two
    /// gradients are known, otherwise `initial`.
    Backtracking {
        initial: f64,
        max_halvings: u32,
    },
    Fixed(f64),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            initial: 1.0,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedPcaParams {
    pub step: StepRule,
    /// Stop once the projected gradient's Frobenius norm drops below this.
    /// `None` selects `1e-6 * tr(Sigma)`.
    pub grad_tol: Option<f64>,
    /// `0` performs the projection alone.
    pub max_iters: usize,
    /// Re-orthonormalize the normalized directions (Gram-Schmidt, in order).
    pub orthonormalize: bool,
}

impl Default for ConstrainedPcaParams {
    fn default() -> Self {
        Self {
            step: StepRule::default(),
            grad_tol: None,
            max_iters: 5000,
            orthonormalize: false,
        }
    }
}

const ARMIJO: f64 = 1e-4;

/// Objective and gradient restricted to `U = H Y`.
struct Reduced {
    trace: f64,
    /// `H^T Sigma H`
    sigma_h: DMatrix<f64>,
}

impl Reduced {
    fn objective(&self, y: &DMatrix<f64>) -> f64 {
        let quad = y.tr_mul(&(&self.sigma_h * y));
        objective_from_parts(self.trace, &y.tr_mul(y), &quad)
    }

    /// `H^T grad R(H Y)`.
    fn gradient(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let sy = &self.sigma_h * y;
        let quad = y.tr_mul(&sy);
        let gram = y.tr_mul(y);
        (y * quad + &sy * gram - &sy * 2.0) * 2.0
    }
}

/// Gradient projection for the cluster-constrained PCA problem.
///
/// Starts from `init` (normally the plain PCA basis). Each iteration takes a
/// gradient step and projects onto the span of `h`; the loop stops when the
/// projected gradient is below the tolerance or `max_iters` is reached. The
/// resulting directions are normalized to unit length and keep `init`'s
/// eigenvalues.
pub fn constrained_pca<S: CovarianceOp + ?Sized>(
    sigma: &S,
    h: &IndicatorMatrix,
    init: &PrincipalBasis,
    params: &ConstrainedPcaParams,
) -> Result<PrincipalBasis> {
    let u0 = &init.directions;
    check_dims(u0, sigma)?;
    if h.rows() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: (sigma.dim(), h.clusters()),
            found: (h.rows(), h.clusters()),
        });
    }
    let trace = sigma.trace();
    let grad_tol = params.grad_tol.unwrap_or(1e-6 * trace);
    if !(grad_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gradient tolerance must be positive, got {grad_tol}"
        )));
    }
    let hm = h.matrix();
    let reduced = Reduced {
        trace,
        sigma_h: sigma.compress(&hm),
    };

    let mut y = h.restrict(u0)?;
    let mut history = alloc::vec![reduced.objective(&y)];
    let mut iterations = 0;
    let mut previous: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    for l in 1..=params.max_iters {
        let direction = if l == 1 {
            h.restrict(&pca_gradient(u0, sigma)?)?
        } else {
            let g = reduced.gradient(&y);
            if g.norm() < grad_tol {
                break;
            }
            g
        };
        let base_value = *history.last().expect("non-empty");
        let next = match params.step {
            StepRule::Fixed(alpha) => {
                let cand = &y - &direction * alpha;
                let value = reduced.objective(&cand);
                Some((cand, value))
            }
            StepRule::Backtracking { initial, max_halvings } => {
                let slope = ARMIJO * direction.norm_squared();
                let mut alpha = previous
                    .as_ref()
                    .and_then(|(py, pg)| {
                        let s = &y - py;
                        let curvature = s.dot(&(&direction - pg));
                        let bb = s.norm_squared() / curvature;
                        (curvature > 0.0 && bb.is_finite()).then_some(bb)
                    })
                    .unwrap_or(initial);
                let mut accepted = None;
                for _ in 0..=max_halvings {
                    let cand = &y - &direction * alpha;
                    let value = reduced.objective(&cand);
                    if value.is_finite() && value <= base_value - alpha * slope {
                        accepted = Some((cand, value));
                        break;
                    }
                    alpha *= 0.5;
                }
                accepted
            }
        };
        let Some((next, value)) = next else {
            // No step decreases R at machine precision: stationary.
            break;
        };
        if !value.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: l });
        }
        if l > 1 {
            previous = Some((core::mem::replace(&mut y, next), direction));
        } else {
            y = next;
        }
        history.push(value);
        iterations = l;
    }
    let final_gradient_norm = reduced.gradient(&y).norm();

    let mut directions = h.expand(&y)?;
    normalize_columns(&mut directions)?;
    if params.orthonormalize {
        gram_schmidt(&mut directions)?;
    }
    Ok(PrincipalBasis {
        directions,
        eigenvalues: init.eigenvalues.clone(),
        informed: true,
        iterations_run: iterations,
        final_gradient_norm,
        objective_history: history,
    })
}

fn normalize_columns(u: &mut DMatrix<f64>) -> Result<()> {
    let scale = u.amax().max(f64::MIN_POSITIVE);
    for (j, mut col) in u.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 1e-14 * scale) {
            return Err(Error::VanishingDirection { index: j });
        }
        col /= norm;
    }
    Ok(())
}

fn gram_schmidt(u: &mut DMatrix<f64>) -> Result<()> {
    for j in 0..u.ncols() {
        for i in 0..j {
            let proj = u.column(i).dot(&u.column(j));
            let prev = u.column(i).into_owned();
            u.column_mut(j).axpy(-proj, &prev, 1.0);
        }
        let norm = u.column(j).norm();
        if !(norm > 1e-12) {
            return Err(Error::VanishingDirection { index: j });
        }
        u.column_mut(j).unscale_mut(norm);
    }
    Ok(())
}
