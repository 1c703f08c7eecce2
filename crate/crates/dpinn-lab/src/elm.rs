//! Extreme-learning-machine solvers: a frozen random tanh layer per block
//! turns the steady problem into one dense linear system in the output
//! weights, solved either exactly (square) or in the least-norm sense.

use crate::dpinn::mix_seed;
use crate::problems::SteadyAdvDiff;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Provenance of one system row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowTag {
    Collocation,
    Boundary,
    ValueInterface,
    SlopeInterface,
}

/// Assembled dense system `A·c = R` with per-row provenance.
#[derive(Debug, Clone)]
pub struct ElmSystem {
    pub a: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub tags: Vec<RowTag>,
}

/// One block's frozen hidden layer and (initially zero) output weights.
#[derive(Debug, Clone)]
struct ElmUnit {
    slopes: Vec<f64>,
    biases: Vec<f64>,
    out_weights: Vec<f64>,
}

impl ElmUnit {
    fn random(n: usize, gain: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slopes = (0..n).map(|_| gain * rng.gen_range(-1.0..=1.0)).collect();
        let biases = (0..n).map(|_| gain * rng.gen_range(-1.0..=1.0)).collect();
        ElmUnit {
            slopes,
            biases,
            out_weights: vec![0.0; n],
        }
    }

    fn value(&self, u: f64) -> f64 {
        self.slopes
            .iter()
            .zip(&self.biases)
            .zip(&self.out_weights)
            .map(|((&m, &b), &c)| c * (m * u + b).tanh())
            .sum()
    }
}

/// Per-block random-feature network with trained output weights.
#[derive(Debug, Clone)]
pub struct ElmNetwork {
    units: Vec<ElmUnit>,
    /// x-extent of each block, left to right.
    extents: Vec<(f64, f64)>,
    /// Blocks rescaled to unit local coordinates.
    normalized: bool,
}

impl ElmNetwork {
    pub fn block_count(&self) -> usize {
        self.units.len()
    }

    pub fn neurons_per_block(&self) -> usize {
        self.units[0].slopes.len()
    }

    pub fn unknown_count(&self) -> usize {
        self.units.iter().map(|u| u.slopes.len()).sum()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Install solved output weights (concatenated block-major).
    pub fn set_weights(&mut self, c: &DVector<f64>) -> Result<()> {
        if c.len() != self.unknown_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} output weights, got {}",
                self.unknown_count(),
                c.len()
            )));
        }
        let mut k = 0;
        for unit in &mut self.units {
            for w in &mut unit.out_weights {
                *w = c[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn owner(&self, x: f64) -> Result<usize> {
        let (x0, _) = self.extents[0];
        let (_, x1) = *self.extents.last().unwrap();
        let slack = 1e-9 * (1.0 + (x1 - x0).abs());
        if x < x0 - slack || x > x1 + slack {
            return Err(Error::OutsideDomain(format!(
                "x = {x} outside [{x0}, {x1}]"
            )));
        }
        let nb = self.extents.len();
        let f = (x - x0) / (x1 - x0) * nb as f64;
        Ok((f.floor() as isize).clamp(0, nb as isize - 1) as usize)
    }

    /// Block-local evaluation; normalized networks map x to the local
    /// coordinate first.
    pub fn predict(&self, x: f64) -> Result<f64> {
        let b = self.owner(x)?;
        let (a, e) = self.extents[b];
        let u = if self.normalized { (x - a) / (e - a) } else { x };
        Ok(self.units[b].value(u))
    }

    #[cfg(test)]
    fn unit_basis(&self, b: usize) -> (&[f64], &[f64]) {
        (&self.units[b].slopes, &self.units[b].biases)
    }
}

/// Options for the block-decomposed assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElmDpinnOptions {
    /// Force block edges into each block's collocation list.
    pub include_edges: bool,
    /// Rescale each block to a unit local coordinate (and the diffusivity to
    /// `NB·eps/L`).
    pub normalized: bool,
    /// Scale of the frozen uniform slopes/biases.
    pub gain: f64,
}

impl Default for ElmDpinnOptions {
    fn default() -> Self {
        ElmDpinnOptions {
            include_edges: true,
            normalized: false,
            gain: 1.0,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n)
        .map(|k| ((n - 1 - k) as f64 * a + k as f64 * b) / (n - 1) as f64)
        .collect()
}

fn linspace_interior(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| a + (b - a) * (k + 1) as f64 / (n + 1) as f64)
        .collect()
}

/// tanh basis values: `(T, T', T'')` with respect to the block coordinate.
fn basis(m: f64, b: f64, u: f64) -> (f64, f64, f64) {
    let t = (m * u + b).tanh();
    let s = 1.0 - t * t;
    (t, m * s, -2.0 * m * m * t * s)
}

fn assemble(
    problem: &SteadyAdvDiff,
    blocks: &[(f64, f64)],
    colloc: &[Vec<f64>],
    neurons: usize,
    normalized: bool,
    gain: f64,
    seed: u64,
) -> Result<(ElmNetwork, ElmSystem)> {
    if neurons == 0 {
        return Err(Error::InvalidConfig("need at least one neuron per block".into()));
    }
    let nb = blocks.len();
    let units: Vec<ElmUnit> = (0..nb)
        .map(|b| ElmUnit::random(neurons, gain, mix_seed(seed, b as u64)))
        .collect();
    let n_colloc: usize = colloc.iter().map(|c| c.len()).sum();
    let rows = n_colloc + 2 + 2 * (nb - 1);
    let cols = nb * neurons;
    let mut a = DMatrix::zeros(rows, cols);
    let mut rhs = DVector::zeros(rows);
    let mut tags = Vec::with_capacity(rows);

    // eps the collocation rows actually use; boundary data is untouched
    let (x0, x1) = (blocks[0].0, blocks[nb - 1].1);
    let eps = if normalized {
        problem.eps * nb as f64 / (x1 - x0)
    } else {
        problem.eps
    };
    let to_local = |b: usize, x: f64| -> f64 {
        if normalized {
            let (xa, xb) = blocks[b];
            (x - xa) / (xb - xa)
        } else {
            x
        }
    };

    let mut r = 0;
    for (b, pts) in colloc.iter().enumerate() {
        let unit = &units[b];
        for &x in pts {
            let u = to_local(b, x);
            for (k, (&m, &bi)) in unit.slopes.iter().zip(&unit.biases).enumerate() {
                let (_, d1, d2) = basis(m, bi, u);
                a[(r, b * neurons + k)] = eps * d2 - problem.c * d1;
            }
            tags.push(RowTag::Collocation);
            r += 1;
        }
    }

    // boundary rows: left end of first block, right end of last
    for (b, x, val) in [
        (0usize, x0, problem.u_left),
        (nb - 1, x1, problem.u_right),
    ] {
        let u = to_local(b, x);
        let unit = &units[b];
        for (k, (&m, &bi)) in unit.slopes.iter().zip(&unit.biases).enumerate() {
            a[(r, b * neurons + k)] = basis(m, bi, u).0;
        }
        rhs[r] = val;
        tags.push(RowTag::Boundary);
        r += 1;
    }

    // interface rows: continuity then differentiability, left to right
    for b in 0..nb - 1 {
        let x = blocks[b].1;
        let ul = to_local(b, x);
        let ur = to_local(b + 1, x);
        for (k, (&m, &bi)) in units[b].slopes.iter().zip(&units[b].biases).enumerate() {
            let (v, d1, _) = basis(m, bi, ul);
            a[(r, b * neurons + k)] = v;
            a[(r + 1, b * neurons + k)] = d1;
        }
        for (k, (&m, &bi)) in units[b + 1]
            .slopes
            .iter()
            .zip(&units[b + 1].biases)
            .enumerate()
        {
            let (v, d1, _) = basis(m, bi, ur);
            a[(r, (b + 1) * neurons + k)] = -v;
            a[(r + 1, (b + 1) * neurons + k)] = -d1;
        }
        tags.push(RowTag::ValueInterface);
        tags.push(RowTag::SlopeInterface);
        r += 2;
    }
    debug_assert_eq!(r, rows);

    Ok((
        ElmNetwork {
            units,
            extents: blocks.to_vec(),
            normalized,
        },
        ElmSystem { a, rhs, tags },
    ))
}

/// Single-domain assembly over caller-provided collocation points.
///
/// Rows: one exact basis residual `eps·T'' - c·T'` per collocation point,
/// then the two boundary-value rows. Square exactly when
/// `n_neurons = points + 2`.
pub fn assemble_elm_pinn(
    problem: &SteadyAdvDiff,
    collocation: &[f64],
    n_neurons: usize,
    gain: f64,
    seed: u64,
) -> Result<(ElmNetwork, ElmSystem)> {
    assemble(
        problem,
        &[(problem.x_left, problem.x_right)],
        &[collocation.to_vec()],
        n_neurons,
        false,
        gain,
        seed,
    )
}

/// Block-decomposed assembly with `NB - 1` continuity and `NB - 1`
/// differentiability rows; collocation points are generated per block
/// (uniform, optionally forced onto the block edges — dropping the edges
/// collapses accuracy).
///
/// With `neurons = pts_per_block + 2` the system is square:
/// `NB·N + 2 + 2(NB-1) = NB(N+2)` rows and unknowns.
pub fn assemble_elm_dpinn(
    problem: &SteadyAdvDiff,
    nb: usize,
    pts_per_block: usize,
    neurons_per_block: usize,
    options: &ElmDpinnOptions,
    seed: u64,
) -> Result<(ElmNetwork, ElmSystem)> {
    if nb == 0 {
        return Err(Error::InvalidConfig("need at least one block".into()));
    }
    let edges: Vec<f64> = (0..=nb)
        .map(|i| ((nb - i) as f64 * problem.x_left + i as f64 * problem.x_right) / nb as f64)
        .collect();
    let blocks: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
    let colloc: Vec<Vec<f64>> = blocks
        .iter()
        .map(|&(a, b)| {
            if options.include_edges && pts_per_block >= 2 {
                linspace(a, b, pts_per_block)
            } else if options.include_edges && pts_per_block > 0 {
                vec![a]
            } else {
                linspace_interior(a, b, pts_per_block)
            }
        })
        .collect();
    assemble(
        problem,
        &blocks,
        &colloc,
        neurons_per_block,
        options.normalized,
        options.gain,
        seed,
    )
}

/// Relative singular-value cutoff of [`solve_pinv`].
pub const DEFAULT_PINV_CUTOFF: f64 = 1e-12;

/// Condition-number ceiling past which the square solve refuses.
const EXACT_COND_LIMIT: f64 = 1e12;

/// Direct solve of a square, well-conditioned system.
///
/// Verifies `‖A·c - R‖∞ ≤ 1e-8·(1 + ‖R‖∞)`; an ill-conditioned or singular
/// matrix is reported as an error that points at [`solve_pinv`].
pub fn solve_exact(system: &ElmSystem) -> Result<DVector<f64>> {
    let (rows, cols) = system.a.shape();
    if rows != cols {
        return Err(Error::InvalidInput(format!(
            "square solve on a {rows}x{cols} system; use solve_pinv"
        )));
    }
    let svd = system.a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax.is_finite() && smin > 0.0) || smax / smin > EXACT_COND_LIMIT {
        return Err(Error::SingularSystem(format!(
            "matrix condition ~{:.2e} approaches singularity; use solve_pinv",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let c = system
        .a
        .clone()
        .lu()
        .solve(&system.rhs)
        .ok_or_else(|| Error::SingularSystem("LU solve failed; use solve_pinv".into()))?;
    let resid = (&system.a * &c - &system.rhs).amax();
    let bound = 1e-8 * (1.0 + system.rhs.amax());
    if !resid.is_finite() || resid > bound {
        return Err(Error::SingularSystem(format!(
            "solve residual {resid:.2e} exceeds {bound:.2e}; use solve_pinv"
        )));
    }
    Ok(c)
}

/// Moore-Penrose solution via SVD with a relative cutoff: minimizes
/// `‖A·c - R‖₂` and, among minimizers, `‖c‖₂`. Defined for any shape.
pub fn solve_pinv(system: &ElmSystem) -> Result<DVector<f64>> {
    solve_pinv_with_cutoff(system, DEFAULT_PINV_CUTOFF)
}

/// [`solve_pinv`] with an explicit relative singular-value cutoff.
pub fn solve_pinv_with_cutoff(system: &ElmSystem, cutoff: f64) -> Result<DVector<f64>> {
    let svd = system.a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = if smax > 0.0 { cutoff * smax } else { cutoff };
    svd.solve(&system.rhs, eps)
        .map_err(|e| Error::SingularSystem(e.into()))
}
