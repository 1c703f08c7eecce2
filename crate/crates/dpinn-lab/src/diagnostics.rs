//! Diagnostic probes for the optimization pathologies: piecewise-polynomial
//! least-norm solves of the discrete equations, and nonlinear regression of
//! the exponential closed form.
//!
//! Both reproduce, with no neural network in sight, the same boundary and
//! interface mismatches the collocation training runs into, which is what
//! makes them useful as independent oracles.

use crate::elm::{solve_exact, solve_pinv, ElmSystem, RowTag};
use crate::problems::SteadyAdvDiff;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Equation forced at piecewise collocation points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Governing {
    /// `eps·Y'' - c·Y' = 0`. Degenerate for linear panels (Y'' vanishes and
    /// the equation pins the slope to zero), so degree 1 rejects it.
    Residual,
    /// `eps·Y' - c·Y = 0`, the flux expression with its integration constant
    /// dropped.
    Flux,
}

/// Dense solver selection for the piecewise systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Exact,
    Pinv,
}

/// Assembled piecewise system plus the geometry needed to interpret its
/// solution vector.
#[derive(Debug, Clone)]
pub struct PiecewiseSystem {
    pub system: ElmSystem,
    pub degree: usize,
    /// `panels + 1` edges.
    pub edges: Vec<f64>,
}

/// Piecewise polynomial fit: per-panel coefficients, highest power first
/// (`[A, B]` for `A·x + B`, `[A, B, C]` for `A·x² + B·x + C`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFit {
    pub degree: usize,
    pub edges: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
}

impl PiecewiseFit {
    pub fn panels(&self) -> usize {
        self.coeffs.len()
    }

    /// Evaluate the fit; a shared edge belongs to the later panel.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let (x0, x1) = (self.edges[0], *self.edges.last().unwrap());
        let slack = 1e-9 * (1.0 + (x1 - x0).abs());
        if x < x0 - slack || x > x1 + slack {
            return Err(Error::OutsideDomain(format!("x = {x} outside [{x0}, {x1}]")));
        }
        let n = self.panels();
        let f = (x - x0) / (x1 - x0) * n as f64;
        let p = (f.floor() as isize).clamp(0, n as isize - 1) as usize;
        let c = &self.coeffs[p];
        Ok(match self.degree {
            1 => c[0] * x + c[1],
            _ => (c[0] * x + c[1]) * x + c[2],
        })
    }
}

fn panel_edges(p: &SteadyAdvDiff, panels: usize) -> Vec<f64> {
    (0..=panels)
        .map(|i| ((panels - i) as f64 * p.x_left + i as f64 * p.x_right) / panels as f64)
        .collect()
}

/// Matrix row of the governing equation at `x` for panel-local unknowns.
fn governing_row(p: &SteadyAdvDiff, degree: usize, governing: Governing, x: f64) -> Vec<f64> {
    match (degree, governing) {
        // eps·A - c·(A·x + B)
        (1, Governing::Flux) => vec![p.eps - p.c * x, -p.c],
        // 2·eps·A - c·(2·A·x + B)
        (2, Governing::Residual) => vec![2.0 * p.eps - 2.0 * p.c * x, -p.c, 0.0],
        // eps·(2·A·x + B) - c·(A·x² + B·x + C)
        (2, Governing::Flux) => vec![
            2.0 * p.eps * x - p.c * x * x,
            p.eps - p.c * x,
            -p.c,
        ],
        _ => unreachable!("validated earlier"),
    }
}

fn value_row(degree: usize, x: f64) -> Vec<f64> {
    match degree {
        1 => vec![x, 1.0],
        _ => vec![x * x, x, 1.0],
    }
}

fn build_system(
    p: &SteadyAdvDiff,
    degree: usize,
    governing: Governing,
    colloc: &[Vec<f64>],
) -> Result<PiecewiseSystem> {
    if degree != 1 && degree != 2 {
        return Err(Error::InvalidConfig(format!(
            "piecewise degree must be 1 or 2, got {degree}"
        )));
    }
    if degree == 1 && governing == Governing::Residual {
        return Err(Error::InvalidCombination(
            "linear panels have zero second derivative; the residual equation \
             degenerates — use the flux form"
                .into(),
        ));
    }
    let panels = colloc.len();
    let edges = panel_edges(p, panels);
    let unknowns_per = degree + 1;
    let n_colloc: usize = colloc.iter().map(|c| c.len()).sum();
    let rows = n_colloc + (panels - 1) + 2;
    let cols = panels * unknowns_per;
    let mut a = DMatrix::zeros(rows, cols);
    let mut rhs = DVector::zeros(rows);
    let mut tags = Vec::with_capacity(rows);
    let mut r = 0;
    for (panel, pts) in colloc.iter().enumerate() {
        for &x in pts {
            for (k, v) in governing_row(p, degree, governing, x).into_iter().enumerate() {
                a[(r, panel * unknowns_per + k)] = v;
            }
            tags.push(RowTag::Collocation);
            r += 1;
        }
    }
    for k in 1..panels {
        let x = edges[k];
        for (j, v) in value_row(degree, x).into_iter().enumerate() {
            a[(r, (k - 1) * unknowns_per + j)] = v;
            a[(r, k * unknowns_per + j)] = -v;
        }
        tags.push(RowTag::ValueInterface);
        r += 1;
    }
    for (panel, x, val) in [(0usize, p.x_left, p.u_left), (panels - 1, p.x_right, p.u_right)] {
        for (j, v) in value_row(degree, x).into_iter().enumerate() {
            a[(r, panel * unknowns_per + j)] = v;
        }
        rhs[r] = val;
        tags.push(RowTag::Boundary);
        r += 1;
    }
    debug_assert_eq!(r, rows);
    Ok(PiecewiseSystem {
        system: ElmSystem { a, rhs, tags },
        degree,
        edges,
    })
}

/// Piecewise system with `collocation_per_panel` uniform interior points in
/// every panel: `panels·collocation + (panels-1) + 2` rows.
pub fn piecewise_system(
    problem: &SteadyAdvDiff,
    panels: usize,
    degree: usize,
    collocation_per_panel: usize,
    governing: Governing,
) -> Result<PiecewiseSystem> {
    if panels == 0 {
        return Err(Error::InvalidConfig("need at least one panel".into()));
    }
    let edges = panel_edges(problem, panels);
    let colloc: Vec<Vec<f64>> = (0..panels)
        .map(|i| {
            let (a, b) = (edges[i], edges[i + 1]);
            (0..collocation_per_panel)
                .map(|k| a + (b - a) * (k + 1) as f64 / (collocation_per_panel + 1) as f64)
                .collect()
        })
        .collect();
    build_system(problem, degree, governing, &colloc)
}

/// Square piecewise system: exactly as many equations as unknowns.
///
/// Boundary and continuity rows are compulsory; the remaining
/// `degree·panels - 1` collocation points are spread one short of uniform
/// (the last panel gets one fewer), matching the count that makes direct
/// inversion possible.
pub fn piecewise_system_square(
    problem: &SteadyAdvDiff,
    panels: usize,
    degree: usize,
    governing: Governing,
) -> Result<PiecewiseSystem> {
    if panels == 0 {
        return Err(Error::InvalidConfig("need at least one panel".into()));
    }
    let edges = panel_edges(problem, panels);
    // per-panel collocation: `degree` points in each of the first panels-1
    // panels, degree-1 in the last, for degree·panels - 1 total
    let colloc: Vec<Vec<f64>> = (0..panels)
        .map(|i| {
            let (a, b) = (edges[i], edges[i + 1]);
            let count = if i + 1 == panels { degree - 1 } else { degree };
            (0..count)
                .map(|k| a + (b - a) * (k + 1) as f64 / (count + 1) as f64)
                .collect()
        })
        .collect();
    build_system(problem, degree, governing, &colloc)
}

/// Solve an assembled piecewise system with the shared dense solvers.
pub fn piecewise_solve(sys: &PiecewiseSystem, method: SolveMethod) -> Result<PiecewiseFit> {
    let x = match method {
        SolveMethod::Exact => solve_exact(&sys.system)?,
        SolveMethod::Pinv => solve_pinv(&sys.system)?,
    };
    let per = sys.degree + 1;
    let coeffs = x
        .as_slice()
        .chunks(per)
        .map(|c| c.to_vec())
        .collect();
    Ok(PiecewiseFit {
        degree: sys.degree,
        edges: sys.edges.clone(),
        coeffs,
    })
}

/// Regression method for the exponential closed form `phi = a·e^{b·x} + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpFitMethod {
    /// Gauss-Newton: `(JᵀJ)δ = Jᵀr`.
    Gna,
    /// `(JᵀJ + λI)δ = Jᵀr`.
    Marquardt,
    /// `(JᵀJ + λ·diag(JᵀJ))δ = Jᵀr`.
    Lma,
    /// `(JᵀJ + λI)δ = Jᵀr + λ·(a,b,c)` — implemented verbatim from its
    /// source; note the extra parameter term on the right-hand side is not
    /// the standard Tikhonov penalty.
    Tikhonov,
}

/// Fit outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitStatus {
    Converged,
    /// Loss rose five iterations in a row, the parameters blew past 1e10,
    /// or the iteration budget ran out.
    Unstable,
    /// Normal matrix singular, non-finite, or condition above 1e12.
    Singular,
}

/// Result of [`exp_fit`]; failure modes come back via `status`, not errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFitResult {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub status: FitStatus,
    pub iterations: usize,
}

/// Jacobian of the model at `params`, columns `[e^{bx}, a·x·e^{bx}, 1]`.
fn exp_jacobian(data: &[(f64, f64)], params: &[f64; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(data.len(), 3, |r, col| {
        let x = data[r].0;
        let e = (params[1] * x).exp();
        match col {
            0 => e,
            1 => params[0] * x * e,
            _ => 1.0,
        }
    })
}

fn exp_residual(data: &[(f64, f64)], params: &[f64; 3]) -> DVector<f64> {
    DVector::from_iterator(
        data.len(),
        data.iter()
            .map(|&(x, y)| y - (params[0] * (params[1] * x).exp() + params[2])),
    )
}

const FIT_COND_LIMIT: f64 = 1e12;

/// One update step of the chosen method; `Err` marks a singular or
/// non-finite normal system.
pub fn exp_fit_delta(
    data: &[(f64, f64)],
    method: ExpFitMethod,
    params: &[f64; 3],
    lambda: f64,
) -> Result<[f64; 3]> {
    let jac = exp_jacobian(data, params);
    let res = exp_residual(data, params);
    let jt = jac.transpose();
    let mut normal_d: Matrix3<f64> = Matrix3::from_iterator((&jt * &jac).iter().copied());
    let mut rhs: Vector3<f64> = Vector3::from_iterator((&jt * &res).iter().copied());
    match method {
        ExpFitMethod::Gna => {}
        ExpFitMethod::Marquardt => {
            for k in 0..3 {
                normal_d[(k, k)] += lambda;
            }
        }
        ExpFitMethod::Lma => {
            for k in 0..3 {
                normal_d[(k, k)] += lambda * normal_d[(k, k)];
            }
        }
        ExpFitMethod::Tikhonov => {
            for k in 0..3 {
                normal_d[(k, k)] += lambda;
                rhs[k] += lambda * params[k];
            }
        }
    }
    if normal_d.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(
            "non-finite normal system in exponential fit".into(),
        ));
    }
    let svd = normal_d.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin <= smax / FIT_COND_LIMIT {
        return Err(Error::SingularSystem(format!(
            "normal matrix condition ~{:.2e}",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let delta = normal_d
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("normal solve failed".into()))?;
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite update".into()));
    }
    Ok([delta[0], delta[1], delta[2]])
}

/// Iterative regression of `phi = a·e^{b·x} + c` onto `data`.
///
/// Needs at least three points. Iterates `params += delta` until
/// `‖delta‖ < tol`; divergence and singular normal systems are reported in
/// the returned status.
pub fn exp_fit(
    data: &[(f64, f64)],
    method: ExpFitMethod,
    init: (f64, f64, f64),
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<ExpFitResult> {
    if data.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "exponential fit needs at least 3 points, got {}",
            data.len()
        )));
    }
    let mut params = [init.0, init.1, init.2];
    let mut prev_loss = f64::INFINITY;
    let mut rises = 0usize;
    for iter in 1..=max_iters {
        let loss = exp_residual(data, &params).norm_squared();
        if !loss.is_finite() {
            return Ok(ExpFitResult {
                a: params[0],
                b: params[1],
                c: params[2],
                status: FitStatus::Singular,
                iterations: iter - 1,
            });
        }
        if loss > prev_loss {
            rises += 1;
        } else {
            rises = 0;
        }
        let norm = (params[0] * params[0] + params[1] * params[1] + params[2] * params[2]).sqrt();
        if rises >= 5 || norm > 1e10 {
            return Ok(ExpFitResult {
                a: params[0],
                b: params[1],
                c: params[2],
                status: FitStatus::Unstable,
                iterations: iter - 1,
            });
        }
        prev_loss = loss;
        let delta = match exp_fit_delta(data, method, &params, lambda) {
            Ok(d) => d,
            Err(_) => {
                return Ok(ExpFitResult {
                    a: params[0],
                    b: params[1],
                    c: params[2],
                    status: FitStatus::Singular,
                    iterations: iter - 1,
                })
            }
        };
        params[0] += delta[0];
        params[1] += delta[1];
        params[2] += delta[2];
        let step = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
        if step < tol {
            return Ok(ExpFitResult {
                a: params[0],
                b: params[1],
                c: params[2],
                status: FitStatus::Converged,
                iterations: iter,
            });
        }
    }
    Ok(ExpFitResult {
        a: params[0],
        b: params[1],
        c: params[2],
        status: FitStatus::Unstable,
        iterations: max_iters,
    })
}
