//! Generalized LSQR for weighted least squares problems.
//!
//! Solves `min_u || B u - b ||_{N^{-1}}` through the generalized Gauss
//! normal equations `B^T N^{-1} B u = B^T N^{-1} b`, preconditioned by a
//! symmetric positive definite `M`. The iteration is a Golub-Kahan
//! bidiagonalization in the `N^{-1}` and `M^{-1}` inner products and touches
//! the operators only through four applications per step: `B`, `B^T`,
//! `N^{-1}` and `M^{-1}`. When `M` is spectrally equivalent to the normal
//! equation operator the iteration count is bounded independently of the
//! discretization.
//!
//! The residual estimate driving the stopping test is `|delta_{i+1}|
//! gamma_{i+1}`, which equals the `M^{-1}` norm of the normal equation
//! residual `B^T N^{-1} (b - B u_i)` in exact arithmetic; the solver stops
//! once it has dropped below `tol` times its initial value `alpha_0 beta_0`.

use crate::error::{Error, Result};

/// Relative size at which a normalization counts as a breakdown.
const BREAKDOWN_TOL: f64 = 1e-14;

/// Stamps an error from inside iteration `i` with that iteration index.
fn at_iteration(e: Error, i: usize) -> Error {
    match e {
        Error::NumericalFailure { message, .. } => Error::NumericalFailure {
            iteration: i,
            message,
        },
        other => other,
    }
}

/// Inner product space operations required of iteration vectors.
pub trait VectorOps: Clone + Send {
    /// Euclidean inner product.
    fn dot(&self, other: &Self) -> f64;
    /// `self *= factor`.
    fn scale(&mut self, factor: f64);
    /// `self += factor * other`.
    fn axpy(&mut self, factor: f64, other: &Self);
    /// Sets every entry to zero.
    fn set_zero(&mut self);

    fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }
}

impl VectorOps for Vec<f64> {
    fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    fn scale(&mut self, factor: f64) {
        for v in self.iter_mut() {
            *v *= factor;
        }
    }

    fn axpy(&mut self, factor: f64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += factor * b;
        }
    }

    fn set_zero(&mut self) {
        self.fill(0.0);
    }
}

/// A vector normalized in a weighted inner product.
pub struct Normalized<V> {
    /// `S^{-1} s / z`, the weighted image.
    pub weighted: V,
    /// `s / z`, the plain direction.
    pub plain: V,
    /// `z = sqrt(s^T S^{-1} s)`.
    pub norm: f64,
}

/// Outcome of [`normalize`]: either a usable pair or a breakdown.
pub enum NormalizeResult<V> {
    Ok(Normalized<V>),
    /// `z` vanished relative to `||s||`; the Krylov space is exhausted.
    Breakdown,
}

/// Normalizes `s` in the inner product induced by `S` given `S^{-1}`.
pub fn normalize<V: VectorOps>(
    s: V,
    apply_weight_inv: &mut impl FnMut(&V) -> Result<V>,
) -> Result<NormalizeResult<V>> {
    let weighted = apply_weight_inv(&s)?;
    let z_sq = s.dot(&weighted);
    if !z_sq.is_finite() {
        return Err(Error::NumericalFailure {
            iteration: 0,
            message: format!("normalization produced a non-finite norm ({z_sq})"),
        });
    }
    let z = z_sq.max(0.0).sqrt();
    if z <= BREAKDOWN_TOL * s.norm() {
        return Ok(NormalizeResult::Breakdown);
    }
    let mut weighted = weighted;
    let mut plain = s;
    weighted.scale(1.0 / z);
    plain.scale(1.0 / z);
    Ok(NormalizeResult::Ok(Normalized {
        weighted,
        plain,
        norm: z,
    }))
}

/// Convergence report of a [`solve`] run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Number of iterations performed.
    pub iterations: usize,
    /// Final residual estimate `|delta| gamma` (absolute).
    pub residual: f64,
    /// Initial residual estimate `alpha_0 beta_0`.
    pub initial_residual: f64,
    /// Whether the stopping test (or a benign breakdown) was reached.
    pub converged: bool,
    /// Residual estimate after 0, 1, 2, ... iterations.
    pub history: Vec<f64>,
}

/// Runs generalized LSQR.
///
/// `apply_b` maps trial to test space, `apply_bt` is its adjoint,
/// `apply_ninv` and `apply_minv` apply the inverse test and trial weights.
/// Breakdowns are benign and reported as convergence; NaN or infinite
/// recurrence scalars abort with a numerical failure naming the iteration.
pub fn solve<U, V>(
    mut apply_b: impl FnMut(&U) -> Result<V>,
    mut apply_bt: impl FnMut(&V) -> Result<U>,
    mut apply_minv: impl FnMut(&U) -> Result<U>,
    mut apply_ninv: impl FnMut(&V) -> Result<V>,
    rhs: &V,
    tol: f64,
    maxit: usize,
) -> Result<(U, SolveReport)>
where
    U: VectorOps,
    V: VectorOps,
{
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    if maxit == 0 {
        return Err(Error::InvalidInput("maxit must be at least 1".into()));
    }

    // A zero trial vector is obtained through the adjoint so the solver
    // never needs a constructor for U.
    let zero_trial = |apply_bt: &mut dyn FnMut(&V) -> Result<U>| -> Result<U> {
        let mut z = rhs.clone();
        z.set_zero();
        let mut u = apply_bt(&z)?;
        u.set_zero();
        Ok(u)
    };

    let (v_hat, v_plain, beta0) = match normalize(rhs.clone(), &mut apply_ninv)? {
        NormalizeResult::Ok(n) => (n.weighted, n.plain, n.norm),
        NormalizeResult::Breakdown => {
            // b = 0: the minimizer is u = 0.
            let u = zero_trial(&mut apply_bt)?;
            return Ok((
                u,
                SolveReport {
                    iterations: 0,
                    residual: 0.0,
                    initial_residual: 0.0,
                    converged: true,
                    history: vec![0.0],
                },
            ));
        }
    };
    let bt_v = apply_bt(&v_hat)?;
    let (w_hat, w_plain, alpha0) = match normalize(bt_v, &mut apply_minv)? {
        NormalizeResult::Ok(n) => (n.weighted, n.plain, n.norm),
        NormalizeResult::Breakdown => {
            // b is N^{-1}-orthogonal to the range of B; u = 0 is optimal.
            let u = zero_trial(&mut apply_bt)?;
            return Ok((
                u,
                SolveReport {
                    iterations: 0,
                    residual: 0.0,
                    initial_residual: 0.0,
                    converged: true,
                    history: vec![0.0],
                },
            ));
        }
    };

    let initial = alpha0 * beta0;
    let threshold = tol * initial;
    let mut history = vec![initial];
    let mut u = {
        let mut z = w_hat.clone();
        z.set_zero();
        z
    };
    if initial <= threshold {
        // Degenerate tolerance >= 1 asks for no reduction at all.
        return Ok((
            u,
            SolveReport {
                iterations: 0,
                residual: initial,
                initial_residual: initial,
                converged: true,
                history,
            },
        ));
    }

    let mut d = u.clone();
    let mut rho_prev = alpha0.hypot(beta0);
    let mut alpha_prev = alpha0;
    let mut beta_prev = beta0;
    let mut v_prev = v_plain;
    let mut w_prev = w_plain;
    let mut w_hat_prev = w_hat;
    let mut delta = alpha0;
    let mut gamma = beta0;
    let mut converged = false;
    let mut residual = initial;
    let mut iterations = 0;

    for i in 1..=maxit {
        iterations = i;

        // Search direction update.
        d.scale(-(alpha_prev * beta_prev) / (rho_prev * rho_prev));
        d.axpy(1.0, &w_hat_prev);

        // Next test-space vector.
        let mut s_v = apply_b(&w_hat_prev)?;
        s_v.axpy(-alpha_prev, &v_prev);
        let step_v = normalize(s_v, &mut apply_ninv).map_err(|e| at_iteration(e, i))?;
        let (v_next, beta_i) = match step_v {
            NormalizeResult::Ok(n) => ((Some((n.weighted, n.plain))), n.norm),
            NormalizeResult::Breakdown => (None, 0.0),
        };

        // Next trial-space vector; skipped after a test-space breakdown.
        let (w_next, alpha_i) = match &v_next {
            Some((v_hat_i, _)) => {
                let mut s_w = apply_bt(v_hat_i)?;
                s_w.axpy(-beta_i, &w_prev);
                match normalize(s_w, &mut apply_minv).map_err(|e| at_iteration(e, i))? {
                    NormalizeResult::Ok(n) => (Some((n.weighted, n.plain)), n.norm),
                    NormalizeResult::Breakdown => (None, 0.0),
                }
            }
            None => (None, 0.0),
        };

        // Iterate update; valid even when this step broke down because only
        // already-computed scalars enter.
        let rho = delta.hypot(beta_i);
        if rho == 0.0 || !rho.is_finite() {
            return Err(Error::NumericalFailure {
                iteration: i,
                message: format!("recurrence scalar rho degenerated to {rho}"),
            });
        }
        u.axpy(delta * gamma / (rho * rho), &d);

        let delta_next = -delta * alpha_i / rho;
        let gamma_next = gamma * beta_i / rho;
        residual = (delta_next * gamma_next).abs();
        history.push(residual);
        if !residual.is_finite() {
            return Err(Error::NumericalFailure {
                iteration: i,
                message: "residual estimate became non-finite".into(),
            });
        }

        let breakdown = v_next.is_none() || w_next.is_none();
        if breakdown || residual <= threshold {
            converged = true;
            break;
        }

        let (_, v_plain_i) = v_next.unwrap();
        let (w_hat_i, w_plain_i) = w_next.unwrap();
        v_prev = v_plain_i;
        w_prev = w_plain_i;
        w_hat_prev = w_hat_i;
        alpha_prev = alpha_i;
        beta_prev = beta_i;
        rho_prev = rho;
        delta = delta_next;
        gamma = gamma_next;
    }

    Ok((
        u,
        SolveReport {
            iterations,
            residual,
            initial_residual: initial,
            converged,
            history,
        },
    ))
}
