//! Benchmark problem definitions, exact-solution oracles and classical
//! finite-difference baselines.
//!
//! Three 1-D problems are covered: steady advection-diffusion (the workhorse,
//! with a closed-form solution), unsteady linear advection (solved exactly by
//! characteristics) and unsteady Burgers (no oracle; participates in residual
//! and gradient work only).

use crate::net::{JetAdjoint, NetJet};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Steady advection-diffusion `c·u' = eps·u''` with Dirichlet data.
///
/// `eps` may be negative; the exact solution and the collocation residual are
/// sign-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyAdvDiff {
    pub c: f64,
    pub eps: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub u_left: f64,
    pub u_right: f64,
}

/// Initial condition for the unsteady problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    /// `height` on the half-open interval `[center - width/2, center + width/2)`.
    SquarePulse { center: f64, width: f64, height: f64 },
    /// 0 before `jump`, 1 at and after it.
    Heaviside { jump: f64 },
}

impl InitialProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialProfile::SquarePulse {
                center,
                width,
                height,
            } => {
                if x >= center - 0.5 * width && x < center + 0.5 * width {
                    height
                } else {
                    0.0
                }
            }
            InitialProfile::Heaviside { jump } => {
                if x >= jump {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Unsteady linear advection `u_t + C·u_x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnsteadyAdvection {
    pub speed: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub initial: InitialProfile,
}

/// Unsteady Burgers `u_t + u·u_x = eps·u_xx`. No exact oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Burgers {
    pub eps: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub initial: InitialProfile,
}

/// Tagged union over the three benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Problem {
    SteadyAdvectionDiffusion(SteadyAdvDiff),
    UnsteadyAdvection(UnsteadyAdvection),
    Burgers(Burgers),
}

/// Slack used when checking domain membership, to absorb rounding in
/// uniformly generated sample grids.
const DOMAIN_SLACK: f64 = 1e-9;

impl Problem {
    /// 1 for the steady problem, 2 for the unsteady ones.
    pub fn input_dim(&self) -> usize {
        match self {
            Problem::SteadyAdvectionDiffusion(_) => 1,
            _ => 2,
        }
    }

    pub fn x_domain(&self) -> (f64, f64) {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => (p.x_left, p.x_right),
            Problem::UnsteadyAdvection(p) => (p.x_left, p.x_right),
            Problem::Burgers(p) => (p.x_left, p.x_right),
        }
    }

    pub fn t_domain(&self) -> Option<(f64, f64)> {
        match self {
            Problem::SteadyAdvectionDiffusion(_) => None,
            Problem::UnsteadyAdvection(p) => Some((p.t_start, p.t_end)),
            Problem::Burgers(p) => Some((p.t_start, p.t_end)),
        }
    }

    /// Diffusivity, when the problem has one.
    pub fn eps(&self) -> Option<f64> {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => Some(p.eps),
            Problem::UnsteadyAdvection(_) => None,
            Problem::Burgers(p) => Some(p.eps),
        }
    }

    /// Same problem with the diffusivity replaced (continuation schedules).
    /// No-op for plain advection.
    pub fn with_eps(&self, eps: f64) -> Problem {
        match *self {
            Problem::SteadyAdvectionDiffusion(p) => {
                Problem::SteadyAdvectionDiffusion(SteadyAdvDiff { eps, ..p })
            }
            Problem::Burgers(p) => Problem::Burgers(Burgers { eps, ..p }),
            p => p,
        }
    }

    /// Reject structurally invalid coefficient/domain combinations.
    pub fn validate(&self) -> Result<()> {
        let (xl, xr) = self.x_domain();
        if !(xl.is_finite() && xr.is_finite() && xl < xr) {
            return Err(Error::InvalidConfig(format!(
                "x domain [{xl}, {xr}] must be finite and non-degenerate"
            )));
        }
        if let Some((t0, t1)) = self.t_domain() {
            if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
                return Err(Error::InvalidConfig(format!(
                    "t domain [{t0}, {t1}] must be finite and non-degenerate"
                )));
            }
        }
        match self {
            Problem::SteadyAdvectionDiffusion(p) => {
                if p.c == 0.0 || !p.c.is_finite() {
                    return Err(Error::InvalidConfig("advection speed c must be finite and nonzero".into()));
                }
                if p.eps == 0.0 || !p.eps.is_finite() {
                    return Err(Error::InvalidConfig("diffusivity eps must be finite and nonzero".into()));
                }
                if !(p.u_left.is_finite() && p.u_right.is_finite()) {
                    return Err(Error::InvalidConfig("boundary values must be finite".into()));
                }
            }
            Problem::UnsteadyAdvection(p) => {
                if !p.speed.is_finite() {
                    return Err(Error::InvalidConfig("advection speed must be finite".into()));
                }
                validate_profile(&p.initial)?;
            }
            Problem::Burgers(p) => {
                if !p.eps.is_finite() {
                    return Err(Error::InvalidConfig("diffusivity eps must be finite".into()));
                }
                validate_profile(&p.initial)?;
            }
        }
        Ok(())
    }

    /// PDE residual of a jet at a point.
    ///
    /// Steady: `eps·u_xx - c·u_x`; advection: `u_t + C·u_x`;
    /// Burgers: `u_t + u·u_x - eps·u_xx`.
    pub fn residual(&self, jet: &NetJet) -> f64 {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => p.eps * jet.d2_dx2 - p.c * jet.d_dx,
            Problem::UnsteadyAdvection(p) => jet.d_dt + p.speed * jet.d_dx,
            Problem::Burgers(p) => {
                jet.d_dt + jet.value * jet.d_dx - p.eps * jet.d2_dx2
            }
        }
    }

    /// Partial derivatives of [`residual`](Self::residual) with respect to
    /// the jet components (Burgers makes them state-dependent).
    pub fn residual_adjoint(&self, jet: &NetJet) -> JetAdjoint {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => JetAdjoint {
                value: 0.0,
                d_dx: -p.c,
                d2_dx2: p.eps,
                d_dt: 0.0,
            },
            Problem::UnsteadyAdvection(p) => JetAdjoint {
                value: 0.0,
                d_dx: p.speed,
                d2_dx2: 0.0,
                d_dt: 1.0,
            },
            Problem::Burgers(p) => JetAdjoint {
                value: jet.d_dx,
                d_dx: jet.value,
                d2_dx2: -p.eps,
                d_dt: 1.0,
            },
        }
    }

    /// Interface flux (the integral of the governing equation in x).
    ///
    /// Steady: `eps·u_x - c·u`; advection: `C·u`; Burgers: `u²/2 - eps·u_x`.
    pub fn interface_flux(&self, jet: &NetJet) -> f64 {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => flux(p, jet),
            Problem::UnsteadyAdvection(p) => p.speed * jet.value,
            Problem::Burgers(p) => 0.5 * jet.value * jet.value - p.eps * jet.d_dx,
        }
    }

    /// Jet cotangent of [`interface_flux`](Self::interface_flux).
    pub fn interface_flux_adjoint(&self, jet: &NetJet) -> JetAdjoint {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => JetAdjoint {
                value: -p.c,
                d_dx: p.eps,
                d2_dx2: 0.0,
                d_dt: 0.0,
            },
            Problem::UnsteadyAdvection(p) => JetAdjoint::value(p.speed),
            Problem::Burgers(p) => JetAdjoint {
                value: jet.value,
                d_dx: -p.eps,
                d2_dx2: 0.0,
                d_dt: 0.0,
            },
        }
    }

    /// Exact solution when the problem has one.
    pub fn exact(&self, x: f64, t: Option<f64>) -> Option<Result<f64>> {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => Some(exact_steady(p, x)),
            Problem::UnsteadyAdvection(p) => {
                let t = t.unwrap_or(p.t_start);
                Some(exact_unsteady(p, x, t))
            }
            Problem::Burgers(_) => None,
        }
    }

    /// Dirichlet value at the left x-boundary (exact data for unsteady).
    pub fn boundary_left(&self, t: Option<f64>) -> f64 {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => p.u_left,
            Problem::UnsteadyAdvection(p) => {
                p.initial.eval(p.x_left - p.speed * (t.unwrap_or(p.t_start) - p.t_start))
            }
            Problem::Burgers(p) => p.initial.eval(p.x_left),
        }
    }

    /// Dirichlet value at the right x-boundary.
    pub fn boundary_right(&self, t: Option<f64>) -> f64 {
        match self {
            Problem::SteadyAdvectionDiffusion(p) => p.u_right,
            Problem::UnsteadyAdvection(p) => {
                p.initial.eval(p.x_right - p.speed * (t.unwrap_or(p.t_start) - p.t_start))
            }
            Problem::Burgers(p) => p.initial.eval(p.x_right),
        }
    }

    /// Initial value at `(x, t_start)`; only meaningful for unsteady problems.
    pub fn initial_value(&self, x: f64) -> f64 {
        match self {
            Problem::SteadyAdvectionDiffusion(_) => 0.0,
            Problem::UnsteadyAdvection(p) => p.initial.eval(x),
            Problem::Burgers(p) => p.initial.eval(x),
        }
    }
}

fn validate_profile(p: &InitialProfile) -> Result<()> {
    match *p {
        InitialProfile::SquarePulse { width, .. } if width <= 0.0 => Err(Error::InvalidConfig(
            "square pulse width must be positive".into(),
        )),
        _ => Ok(()),
    }
}

/// Closed-form steady solution, stable in boundary-layer regimes.
///
/// The textbook form divides exponentials that overflow once `|c·L/eps|`
/// passes ~700; this version rewrites the ratio with `exp_m1` and shifted
/// exponents so it stays finite for any nonzero `eps`.
pub fn exact_steady(p: &SteadyAdvDiff, x: f64) -> Result<f64> {
    if p.eps == 0.0 {
        return Err(Error::DegenerateProblem(
            "steady exact solution undefined for eps = 0".into(),
        ));
    }
    let l = p.x_right - p.x_left;
    let slack = DOMAIN_SLACK * (1.0 + l.abs());
    if x < p.x_left - slack || x > p.x_right + slack {
        return Err(Error::OutsideDomain(format!(
            "x = {x} outside [{}, {}]",
            p.x_left, p.x_right
        )));
    }
    let s = (x - p.x_left).clamp(0.0, l);
    let r = p.c / p.eps;
    let ratio = if r > 0.0 {
        // (e^{rs}-1)/(e^{rL}-1) = e^{r(s-L)} · (1-e^{-rs})/(1-e^{-rL})
        (r * (s - l)).exp() * (-r * s).exp_m1() / (-r * l).exp_m1()
    } else {
        (r * s).exp_m1() / (r * l).exp_m1()
    };
    Ok(p.u_left + (p.u_right - p.u_left) * ratio)
}

/// Exact unsteady advection by characteristics: `u(x,t) = u0(x - C·(t-t0))`.
pub fn exact_unsteady(p: &UnsteadyAdvection, x: f64, t: f64) -> Result<f64> {
    let slack_x = DOMAIN_SLACK * (1.0 + (p.x_right - p.x_left).abs());
    let slack_t = DOMAIN_SLACK * (1.0 + (p.t_end - p.t_start).abs());
    if x < p.x_left - slack_x || x > p.x_right + slack_x {
        return Err(Error::OutsideDomain(format!(
            "x = {x} outside [{}, {}]",
            p.x_left, p.x_right
        )));
    }
    if t < p.t_start - slack_t || t > p.t_end + slack_t {
        return Err(Error::OutsideDomain(format!(
            "t = {t} outside [{}, {}]",
            p.t_start, p.t_end
        )));
    }
    Ok(p.initial.eval(x - p.speed * (t - p.t_start)))
}

/// Steady flux `eps·u_x - c·u`.
pub fn flux(p: &SteadyAdvDiff, jet: &NetJet) -> f64 {
    p.eps * jet.d_dx - p.c * jet.value
}

/// Grid Peclet number `c·dx/eps`.
pub fn peclet(c: f64, dx: f64, eps: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    c * dx / eps
}

/// Artificial diffusivity that makes central differencing nodally exact.
///
/// Closed form `a·((Pe/2)·coth(Pe/2) - 1)` with `Pe = b·dx/a`; equals the
/// ratio-of-exponentials form everywhere it is representable, and falls back
/// to the series `a·Pe²/12` below `|Pe| = 1e-4` where both forms hit 0/0.
pub fn artificial_diffusion(a: f64, b: f64, dx: f64) -> Result<f64> {
    if a == 0.0 {
        return Err(Error::DegenerateProblem(
            "artificial diffusion undefined for zero diffusivity".into(),
        ));
    }
    let pe = b * dx / a;
    if pe.abs() < 1e-4 {
        return Ok(a * pe * pe / 12.0);
    }
    let half = 0.5 * pe;
    Ok(a * (half / half.tanh() - 1.0))
}

/// Finite-difference scheme tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Cds,
    Uds,
    CdsArtificialDiffusion,
}

/// Nodal finite-difference solution on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FDSolution {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub scheme: Scheme,
}

/// Thomas elimination for a tridiagonal system; diagonals indexed by row.
fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c_star = vec![0.0; n];
    let mut d_star = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SingularSystem("zero pivot in tridiagonal solve".into()));
    }
    c_star[0] = upper[0] / denom;
    d_star[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c_star[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem(format!(
                "zero pivot at row {i} in tridiagonal solve"
            )));
        }
        c_star[i] = upper[i] / denom;
        d_star[i] = (rhs[i] - lower[i] * d_star[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d_star[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d_star[i] - c_star[i] * x[i + 1];
    }
    Ok(x)
}

fn fd_grid(p: &SteadyAdvDiff, n_cells: usize) -> Vec<f64> {
    let h = (p.x_right - p.x_left) / n_cells as f64;
    (0..=n_cells).map(|i| p.x_left + i as f64 * h).collect()
}

fn fd_solve(p: &SteadyAdvDiff, n_cells: usize, upwind: bool, scheme: Scheme) -> Result<FDSolution> {
    if n_cells < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 cells, got {n_cells}"
        )));
    }
    let h = (p.x_right - p.x_left) / n_cells as f64;
    let n = n_cells - 1; // interior unknowns
    let diff = p.eps / (h * h);
    let (al, ad, au) = if upwind {
        if p.c >= 0.0 {
            (-p.c / h - diff, p.c / h + 2.0 * diff, -diff)
        } else {
            (-diff, -p.c / h + 2.0 * diff, p.c / h - diff)
        }
    } else {
        (-p.c / (2.0 * h) - diff, 2.0 * diff, p.c / (2.0 * h) - diff)
    };
    let lower = vec![al; n];
    let diag = vec![ad; n];
    let upper = vec![au; n];
    let mut rhs = vec![0.0; n];
    rhs[0] -= al * p.u_left;
    rhs[n - 1] -= au * p.u_right;
    let interior = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut values = Vec::with_capacity(n_cells + 1);
    values.push(p.u_left);
    values.extend(interior);
    values.push(p.u_right);
    Ok(FDSolution {
        grid: fd_grid(p, n_cells),
        values,
        scheme,
    })
}

/// Central-difference solve; oscillatory once the cell Peclet number passes 2.
pub fn cds_solve(p: &SteadyAdvDiff, n_cells: usize) -> Result<FDSolution> {
    fd_solve(p, n_cells, false, Scheme::Cds)
}

/// Upwind solve; monotone for any Peclet number, at first-order accuracy.
pub fn uds_solve(p: &SteadyAdvDiff, n_cells: usize) -> Result<FDSolution> {
    fd_solve(p, n_cells, true, Scheme::Uds)
}

/// Central-difference solve with the artificial-diffusion correction
/// `eps* = eps + mu`; nodally exact for the steady problem.
pub fn cds_artificial_diffusion_solve(p: &SteadyAdvDiff, n_cells: usize) -> Result<FDSolution> {
    let h = (p.x_right - p.x_left) / n_cells as f64;
    let mu = artificial_diffusion(p.eps, p.c, h)?;
    let corrected = SteadyAdvDiff {
        eps: p.eps + mu,
        ..*p
    };
    let mut sol = fd_solve(&corrected, n_cells, false, Scheme::CdsArtificialDiffusion)?;
    sol.scheme = Scheme::CdsArtificialDiffusion;
    Ok(sol)
}
