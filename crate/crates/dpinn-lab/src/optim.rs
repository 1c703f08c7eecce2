//! First-order parameter steppers (GD, Adagrad, Adam) and the damped
//! Levenberg-Marquardt update for least-squares objectives.
//!
//! All steppers are deterministic pure functions of their state and inputs;
//! training owns one state per run.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Optimizer selector used by configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Gd,
    Adagrad,
    Adam,
    Lma,
}

/// State of a first-order stepper. Accumulators are sized on the first step
/// and must match the parameter count afterwards.
#[derive(Debug, Clone)]
pub enum FirstOrder {
    Gd {
        lr: f64,
    },
    Adagrad {
        lr: f64,
        delta: f64,
        accum: Vec<f64>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        delta: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

impl FirstOrder {
    pub fn gd(lr: f64) -> Self {
        FirstOrder::Gd { lr }
    }

    pub fn adagrad(lr: f64) -> Self {
        FirstOrder::Adagrad {
            lr,
            delta: 1e-8,
            accum: Vec::new(),
        }
    }

    /// Adam with the usual defaults: beta1 = 0.9, beta2 = 0.999, delta = 1e-8.
    pub fn adam(lr: f64) -> Self {
        FirstOrder::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        match kind {
            OptimizerKind::Gd => Ok(Self::gd(lr)),
            OptimizerKind::Adagrad => Ok(Self::adagrad(lr)),
            OptimizerKind::Adam => Ok(Self::adam(lr)),
            OptimizerKind::Lma => Err(Error::InvalidConfig(
                "LMA is not a first-order stepper".into(),
            )),
        }
    }

    /// One in-place update `params <- params - direction(gradient)`.
    pub fn step(&mut self, params: &mut [f64], gradient: &[f64]) -> Result<()> {
        if gradient.len() != params.len() {
            return Err(Error::InvalidInput(format!(
                "gradient length {} does not match parameter count {}",
                gradient.len(),
                params.len()
            )));
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::DivergedTraining {
                iter: 0,
                term: "gradient".into(),
                trace: Box::default(),
            });
        }
        match self {
            FirstOrder::Gd { lr } => {
                for (p, g) in params.iter_mut().zip(gradient) {
                    *p -= *lr * g;
                }
            }
            FirstOrder::Adagrad { lr, delta, accum } => {
                if accum.is_empty() {
                    accum.resize(params.len(), 0.0);
                }
                for ((p, g), a) in params.iter_mut().zip(gradient).zip(accum.iter_mut()) {
                    *a += g * g;
                    *p -= *lr * g / (*a + *delta).sqrt();
                }
            }
            FirstOrder::Adam {
                lr,
                beta1,
                beta2,
                delta,
                m,
                v,
                t,
            } => {
                if m.is_empty() {
                    m.resize(params.len(), 0.0);
                    v.resize(params.len(), 0.0);
                }
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for (k, (p, g)) in params.iter_mut().zip(gradient).enumerate() {
                    m[k] = *beta1 * m[k] + (1.0 - *beta1) * g;
                    v[k] = *beta2 * v[k] + (1.0 - *beta2) * g * g;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    *p -= *lr * m_hat / (v_hat.sqrt() + *delta);
                }
            }
        }
        Ok(())
    }
}

/// Damping state for Levenberg-Marquardt.
#[derive(Debug, Clone, Copy)]
pub struct LmaState {
    /// Current damping.
    pub mu: f64,
    /// Multiplicative adaptation factor.
    pub nu: f64,
}

impl Default for LmaState {
    fn default() -> Self {
        LmaState { mu: 1e-3, nu: 10.0 }
    }
}

const LMA_MU_MAX: f64 = 1e12;
const LMA_MU_MIN: f64 = 1e-12;

/// Solve the damped normal equations `(JᵀJ + mu·I)·delta = -Jᵀe`.
pub fn lma_delta(jacobian: &DMatrix<f64>, residual: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    let n = jacobian.ncols();
    let mut normal = jacobian.transpose() * jacobian;
    for k in 0..n {
        normal[(k, k)] += mu;
    }
    if normal.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(
            "non-finite entries in LMA normal matrix".into(),
        ));
    }
    let rhs = -(jacobian.transpose() * residual);
    if let Some(chol) = normal.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("LMA normal matrix is singular".into()))
}

/// One accepted Levenberg-Marquardt update.
///
/// Solves the damped normal equations at the current damping; if the trial
/// point lowers the squared residual norm (reported by `eval_norm2`), the
/// step is accepted and `mu` shrinks by `nu`, otherwise `mu` grows by `nu`
/// and the solve retries. Exhausting the damping range is reported as a
/// singular system, which is the expected outcome when `JᵀJ` is rank
/// deficient and no damping level makes progress.
pub fn step_lma<F>(
    state: &mut LmaState,
    params: &mut [f64],
    residual: &DVector<f64>,
    jacobian: &DMatrix<f64>,
    mut eval_norm2: F,
) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if jacobian.nrows() != residual.len() || jacobian.ncols() != params.len() {
        return Err(Error::InvalidInput(format!(
            "Jacobian {}x{} does not match {} residuals / {} parameters",
            jacobian.nrows(),
            jacobian.ncols(),
            residual.len(),
            params.len()
        )));
    }
    let norm2_old = residual.norm_squared();
    let mut trial = vec![0.0; params.len()];
    while state.mu <= LMA_MU_MAX {
        let delta = match lma_delta(jacobian, residual, state.mu) {
            Ok(d) => d,
            Err(_) => {
                state.mu *= state.nu;
                continue;
            }
        };
        for (t, (p, d)) in trial.iter_mut().zip(params.iter().zip(delta.iter())) {
            *t = p + d;
        }
        let norm2_new = eval_norm2(&trial)?;
        if norm2_new.is_finite() && norm2_new < norm2_old {
            params.copy_from_slice(&trial);
            state.mu = (state.mu / state.nu).max(LMA_MU_MIN);
            return Ok(());
        }
        state.mu *= state.nu;
    }
    Err(Error::SingularSystem(format!(
        "LMA made no progress up to mu = {LMA_MU_MAX:e}"
    )))
}
