//! Collocation sampling and the composite DPINN loss.
//!
//! Term conventions (frozen here; the per-term scalings differ on purpose):
//! the collocation term is a half-mean over the per-block point count, every
//! other term is a half-sum. Boundary, initial and interface terms are
//! evaluated on fixed uniform per-block rows (edges included), independent of
//! how the interior collocation points are drawn, so resampling the interior
//! never moves the constraint set.

use crate::dpinn::grid::BlockGrid;
use crate::dpinn::model::{mix_seed, BlockModel, CollocationTarget};
use crate::net::JetAdjoint;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How interior collocation points are placed within each block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Uniform,
    Random,
}

/// Per-block collocation points (tensor product of per-axis lists).
#[derive(Debug, Clone, PartialEq)]
pub struct Collocation {
    nbx_pts: usize,
    nbt_pts: usize,
    /// x-values per block, in block-index order.
    xs: Vec<Vec<f64>>,
    /// t-values per block; empty inner vectors for steady grids.
    ts: Vec<Vec<f64>>,
}

impl Collocation {
    pub fn nbx_pts(&self) -> usize {
        self.nbx_pts
    }

    pub fn nbt_pts(&self) -> usize {
        self.nbt_pts
    }

    pub fn block_x(&self, b: usize) -> &[f64] {
        &self.xs[b]
    }

    pub fn block_t(&self, b: usize) -> &[f64] {
        &self.ts[b]
    }

    /// Points per block (the `m` of the half-mean collocation term).
    pub fn points_per_block(&self) -> usize {
        self.nbx_pts * self.nbt_pts.max(1)
    }
}

/// `n` points spanning `[a, b]` inclusive; the midpoint when `n = 1`.
pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n)
        .map(|k| ((n - 1 - k) as f64 * a + k as f64 * b) / (n - 1) as f64)
        .collect()
}

/// `n` interior points of `(a, b)` at uniform spacing.
fn linspace_interior(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| a + (b - a) * (k + 1) as f64 / (n + 1) as f64)
        .collect()
}

fn axis_points<R: Rng>(
    a: f64,
    b: f64,
    n: usize,
    mode: SamplingMode,
    include_edges: bool,
    rng: &mut R,
) -> Vec<f64> {
    match mode {
        SamplingMode::Uniform => {
            if include_edges {
                linspace(a, b, n)
            } else {
                linspace_interior(a, b, n)
            }
        }
        SamplingMode::Random => {
            let mut pts = Vec::with_capacity(n);
            if include_edges {
                pts.push(a);
                pts.push(b);
            }
            while pts.len() < n {
                pts.push(rng.gen_range(a..b));
            }
            pts
        }
    }
}

/// Draw collocation points for every block.
///
/// `seed` fully determines the draw; callers that resample per iteration
/// derive a fresh seed from `(run seed, iteration)` so reruns reproduce.
/// `include_edges` forces the block-extent endpoints into each axis list.
pub fn sample_collocation(
    grid: &BlockGrid,
    nbx_pts: usize,
    nbt_pts: usize,
    mode: SamplingMode,
    include_edges: bool,
    seed: u64,
) -> Result<Collocation> {
    if nbx_pts == 0 || (!grid.is_steady() && nbt_pts == 0) {
        return Err(Error::InvalidConfig("collocation counts must be at least 1".into()));
    }
    if include_edges && (nbx_pts < 2 || (!grid.is_steady() && nbt_pts < 2)) {
        return Err(Error::InvalidConfig(
            "include_edges needs at least 2 points per axis".into(),
        ));
    }
    let mut xs = Vec::with_capacity(grid.block_count());
    let mut ts = Vec::with_capacity(grid.block_count());
    for j in 0..grid.nbt() {
        for i in 0..grid.nbx() {
            let b = grid.block_index(i, j);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, b as u64));
            let (xa, xb) = grid.x_extent(i);
            xs.push(axis_points(xa, xb, nbx_pts, mode, include_edges, &mut rng));
            if let Some((ta, tb)) = grid.t_extent(j) {
                ts.push(axis_points(ta, tb, nbt_pts, mode, include_edges, &mut rng));
            } else {
                ts.push(Vec::new());
            }
        }
    }
    Ok(Collocation {
        nbx_pts,
        nbt_pts: if grid.is_steady() { 1 } else { nbt_pts },
        xs,
        ts,
    })
}

/// Raw per-term loss values plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossValues {
    pub l_f: f64,
    pub l_b: f64,
    pub l_i: f64,
    pub l_vm: f64,
    pub l_sm: f64,
    pub l_sdm: f64,
    pub l_fm: f64,
    pub l_reg: f64,
    /// Weighted sum of the terms above.
    pub total: f64,
}

impl LossValues {
    const TERM_NAMES: [&'static str; 8] =
        ["l_f", "l_b", "l_i", "l_vm", "l_sm", "l_sdm", "l_fm", "l_reg"];

    fn terms(&self) -> [f64; 8] {
        [
            self.l_f, self.l_b, self.l_i, self.l_vm, self.l_sm, self.l_sdm, self.l_fm,
            self.l_reg,
        ]
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        self.terms()
            .iter()
            .zip(Self::TERM_NAMES)
            .find(|(v, _)| !v.is_finite())
            .map(|(_, n)| n)
    }
}

/// One full loss evaluation: term values and per-term parameter-gradient
/// norms. Gradient norms are of the weighted contributions `w·∇l`, so
/// `g_total` is the norm of the actual training gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(flatten)]
    pub values: LossValues,
    pub g_f: f64,
    pub g_b: f64,
    pub g_i: f64,
    pub g_vm: f64,
    pub g_sm: f64,
    pub g_sdm: f64,
    pub g_fm: f64,
    pub g_reg: f64,
    pub g_total: f64,
}

/// Which gradients a loss evaluation accumulates.
enum GradMode<'a> {
    /// Values only.
    None,
    /// Single gradient of the weighted total.
    Total(&'a mut [f64]),
    /// One unweighted gradient vector per term.
    PerTerm(&'a mut [Vec<f64>]),
}

const TERM_F: usize = 0;
const TERM_B: usize = 1;
const TERM_I: usize = 2;
const TERM_VM: usize = 3;
const TERM_SM: usize = 4;
const TERM_SDM: usize = 5;
const TERM_FM: usize = 6;
const TERM_REG: usize = 7;

impl BlockModel {
    /// Full loss breakdown with per-term gradient norms.
    pub fn loss_terms(&self, colloc: &Collocation) -> Result<LossBreakdown> {
        self.loss_terms_with_eps(colloc, None)
    }

    /// Loss breakdown with the diffusivity overridden (continuation).
    pub fn loss_terms_with_eps(
        &self,
        colloc: &Collocation,
        eps_override: Option<f64>,
    ) -> Result<LossBreakdown> {
        let n = self.param_count();
        let mut per_term: Vec<Vec<f64>> = (0..8).map(|_| vec![0.0; n]).collect();
        let values = self.accumulate(colloc, eps_override, GradMode::PerTerm(&mut per_term))?;
        let w = self.weights;
        let weights = [w.w_f, w.w_b, w.w_i, w.w_vm, w.w_sm, w.w_sdm, w.w_fm, w.lambda_reg];
        let norms: Vec<f64> = per_term
            .iter()
            .zip(weights)
            .map(|(g, w)| w * g.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut g_total = 0.0;
        for k in 0..n {
            let s: f64 = (0..8).map(|t| weights[t] * per_term[t][k]).sum();
            g_total += s * s;
        }
        Ok(LossBreakdown {
            values,
            g_f: norms[TERM_F],
            g_b: norms[TERM_B],
            g_i: norms[TERM_I],
            g_vm: norms[TERM_VM],
            g_sm: norms[TERM_SM],
            g_sdm: norms[TERM_SDM],
            g_fm: norms[TERM_FM],
            g_reg: norms[TERM_REG],
            g_total: g_total.sqrt(),
        })
    }

    /// Term values only.
    pub fn loss_values(&self, colloc: &Collocation) -> Result<LossValues> {
        self.accumulate(colloc, None, GradMode::None)
    }

    /// Term values with the diffusivity overridden.
    pub fn loss_values_with_eps(
        &self,
        colloc: &Collocation,
        eps_override: Option<f64>,
    ) -> Result<LossValues> {
        self.accumulate(colloc, eps_override, GradMode::None)
    }

    /// Fast path for training: values plus the gradient of the weighted
    /// total, accumulated into `grad` (zeroed here).
    pub fn loss_and_gradient(
        &self,
        colloc: &Collocation,
        eps_override: Option<f64>,
        grad: &mut [f64],
    ) -> Result<LossValues> {
        if grad.len() != self.param_count() {
            return Err(Error::InvalidInput(format!(
                "gradient buffer has {} entries, model has {} parameters",
                grad.len(),
                self.param_count()
            )));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.accumulate(colloc, eps_override, GradMode::Total(grad))
    }

    fn accumulate(
        &self,
        colloc: &Collocation,
        eps_override: Option<f64>,
        mut mode: GradMode<'_>,
    ) -> Result<LossValues> {
        let grid = *self.grid();
        let eff = self.effective_problem(eps_override);
        let data = *self.problem();
        let w = self.weights;
        let steady = grid.is_steady();
        let mut ws_a = self.nets()[0].workspace();
        let mut ws_b = self.nets()[0].workspace();

        let m = colloc.points_per_block() as f64;
        let mut acc = [0.0f64; 8];

        // helper: route one backprop either into the total or a term vector
        macro_rules! push_grad {
            ($ws:expr, $i:expr, $j:expr, $x:expr, $adj:expr, $term:expr, $weight:expr) => {
                match &mut mode {
                    GradMode::None => {}
                    GradMode::Total(g) => {
                        if $weight != 0.0 {
                            let mut a = $adj;
                            a.value *= $weight;
                            a.d_dx *= $weight;
                            a.d2_dx2 *= $weight;
                            a.d_dt *= $weight;
                            self.backprop_block_ws($ws, $i, $j, $x, &a, g);
                        }
                    }
                    GradMode::PerTerm(gs) => {
                        self.backprop_block_ws($ws, $i, $j, $x, &$adj, &mut gs[$term]);
                    }
                }
            };
        }

        // collocation residuals: half-mean over the per-block point count
        for j in 0..grid.nbt() {
            for i in 0..grid.nbx() {
                let b = grid.block_index(i, j);
                let xs = colloc.block_x(b);
                let ts = colloc.block_t(b);
                let nt = if steady { 1 } else { ts.len() };
                for ti in 0..nt {
                    let t = if steady { None } else { Some(ts[ti]) };
                    for &x in xs {
                        let jet = self.eval_block_ws(&mut ws_a, i, j, x, t);
                        let (r, r_adj) = match self.collocation_target() {
                            CollocationTarget::Residual => {
                                (eff.residual(&jet), eff.residual_adjoint(&jet))
                            }
                            CollocationTarget::Flux => {
                                (eff.interface_flux(&jet), eff.interface_flux_adjoint(&jet))
                            }
                        };
                        acc[TERM_F] += r * r;
                        let s = r / m;
                        let adj = JetAdjoint {
                            value: s * r_adj.value,
                            d_dx: s * r_adj.d_dx,
                            d2_dx2: s * r_adj.d2_dx2,
                            d_dt: s * r_adj.d_dt,
                        };
                        push_grad!(&mut ws_a, i, j, x, adj, TERM_F, w.w_f);
                    }
                }
            }
        }

        // boundary rows: both x-ends, at uniform t rows of each block row
        let (x0, x1) = grid.x_domain();
        for j in 0..grid.nbt() {
            let t_rows: Vec<Option<f64>> = match grid.t_extent(j) {
                None => vec![None],
                Some((ta, tb)) => linspace(ta, tb, colloc.nbt_pts())
                    .into_iter()
                    .map(Some)
                    .collect(),
            };
            for &t in &t_rows {
                let jet = self.eval_block_ws(&mut ws_a, 0, j, x0, t);
                let d = jet.value - data.boundary_left(t);
                acc[TERM_B] += d * d;
                push_grad!(&mut ws_a, 0, j, x0, JetAdjoint::value(d), TERM_B, w.w_b);

                let il = grid.nbx() - 1;
                let jet = self.eval_block_ws(&mut ws_a, il, j, x1, t);
                let d = jet.value - data.boundary_right(t);
                acc[TERM_B] += d * d;
                push_grad!(&mut ws_a, il, j, x1, JetAdjoint::value(d), TERM_B, w.w_b);
            }
        }

        // initial rows: bottom block row at t = t_start
        if let Some((t_start, _)) = grid.t_domain() {
            for i in 0..grid.nbx() {
                let (xa, xb) = grid.x_extent(i);
                for x in linspace(xa, xb, colloc.nbx_pts()) {
                    let jet = self.eval_block_ws(&mut ws_a, i, 0, x, Some(t_start));
                    let d = jet.value - data.initial_value(x);
                    acc[TERM_I] += d * d;
                    push_grad!(
                        &mut ws_a,
                        i,
                        0,
                        x,
                        JetAdjoint::value(d),
                        TERM_I,
                        w.w_i
                    );
                }
            }
        }

        // x-interface matching at every block row
        for j in 0..grid.nbt() {
            let t_rows: Vec<Option<f64>> = match grid.t_extent(j) {
                None => vec![None],
                Some((ta, tb)) => linspace(ta, tb, colloc.nbt_pts())
                    .into_iter()
                    .map(Some)
                    .collect(),
            };
            for k in 1..grid.nbx() {
                let x = grid.x_edge(k);
                for &t in &t_rows {
                    let left = self.eval_block_ws(&mut ws_a, k - 1, j, x, t);
                    let right = self.eval_block_ws(&mut ws_b, k, j, x, t);
                    let dv = left.value - right.value;
                    let ds = left.d_dx - right.d_dx;
                    let dsd = left.d2_dx2 - right.d2_dx2;
                    let df = eff.interface_flux(&left) - eff.interface_flux(&right);
                    acc[TERM_VM] += dv * dv;
                    acc[TERM_SM] += ds * ds;
                    acc[TERM_SDM] += dsd * dsd;
                    acc[TERM_FM] += df * df;

                    let fl = eff.interface_flux_adjoint(&left);
                    let fr = eff.interface_flux_adjoint(&right);
                    match &mut mode {
                        GradMode::None => {}
                        GradMode::Total(g) => {
                            let la = JetAdjoint {
                                value: w.w_vm * dv + w.w_fm * df * fl.value,
                                d_dx: w.w_sm * ds + w.w_fm * df * fl.d_dx,
                                d2_dx2: w.w_sdm * dsd,
                                d_dt: 0.0,
                            };
                            let ra = JetAdjoint {
                                value: -(w.w_vm * dv) - w.w_fm * df * fr.value,
                                d_dx: -(w.w_sm * ds) - w.w_fm * df * fr.d_dx,
                                d2_dx2: -(w.w_sdm * dsd),
                                d_dt: 0.0,
                            };
                            self.backprop_block_ws(&mut ws_a, k - 1, j, x, &la, g);
                            self.backprop_block_ws(&mut ws_b, k, j, x, &ra, g);
                        }
                        GradMode::PerTerm(gs) => {
                            let pairs: [(usize, JetAdjoint, JetAdjoint); 4] = [
                                (
                                    TERM_VM,
                                    JetAdjoint::value(dv),
                                    JetAdjoint::value(-dv),
                                ),
                                (
                                    TERM_SM,
                                    JetAdjoint { value: 0.0, d_dx: ds, d2_dx2: 0.0, d_dt: 0.0 },
                                    JetAdjoint { value: 0.0, d_dx: -ds, d2_dx2: 0.0, d_dt: 0.0 },
                                ),
                                (
                                    TERM_SDM,
                                    JetAdjoint { value: 0.0, d_dx: 0.0, d2_dx2: dsd, d_dt: 0.0 },
                                    JetAdjoint { value: 0.0, d_dx: 0.0, d2_dx2: -dsd, d_dt: 0.0 },
                                ),
                                (
                                    TERM_FM,
                                    JetAdjoint {
                                        value: df * fl.value,
                                        d_dx: df * fl.d_dx,
                                        d2_dx2: 0.0,
                                        d_dt: 0.0,
                                    },
                                    JetAdjoint {
                                        value: -df * fr.value,
                                        d_dx: -df * fr.d_dx,
                                        d2_dx2: 0.0,
                                        d_dt: 0.0,
                                    },
                                ),
                            ];
                            for (term, la, ra) in pairs {
                                self.backprop_block_ws(&mut ws_a, k - 1, j, x, &la, &mut gs[term]);
                                self.backprop_block_ws(&mut ws_b, k, j, x, &ra, &mut gs[term]);
                            }
                        }
                    }
                }
            }
        }

        // optional value matching across t-interfaces
        if self.match_t_interfaces() && grid.nbt() > 1 {
            for k in 1..grid.nbt() {
                let t = grid.t_edge(k).unwrap();
                for i in 0..grid.nbx() {
                    let (xa, xb) = grid.x_extent(i);
                    for x in linspace(xa, xb, colloc.nbx_pts()) {
                        let lower = self.eval_block_ws(&mut ws_a, i, k - 1, x, Some(t));
                        let upper = self.eval_block_ws(&mut ws_b, i, k, x, Some(t));
                        let dv = lower.value - upper.value;
                        acc[TERM_VM] += dv * dv;
                        push_grad!(&mut ws_a, i, k - 1, x, JetAdjoint::value(dv), TERM_VM, w.w_vm);
                        push_grad!(
                            &mut ws_b,
                            i,
                            k,
                            x,
                            JetAdjoint::value(-dv),
                            TERM_VM,
                            w.w_vm
                        );
                    }
                }
            }
        }

        // parameter regularization over all net parameters (not trial extras)
        let net_param_count = self.extras_offset();
        let p_norm = net_param_count as f64;
        let mut reg = 0.0;
        for (b, net) in self.nets().iter().enumerate() {
            let flat = net.flatten();
            for (k, &v) in flat.iter().enumerate() {
                reg += v * v;
                let off = self.net_offset(b) + k;
                match &mut mode {
                    GradMode::None => {}
                    GradMode::Total(g) => {
                        if w.lambda_reg != 0.0 {
                            g[off] += w.lambda_reg * v / p_norm;
                        }
                    }
                    GradMode::PerTerm(gs) => gs[TERM_REG][off] += v / p_norm,
                }
            }
        }

        let values = LossValues {
            l_f: acc[TERM_F] / (2.0 * m),
            l_b: acc[TERM_B] / 2.0,
            l_i: acc[TERM_I] / 2.0,
            l_vm: acc[TERM_VM] / 2.0,
            l_sm: acc[TERM_SM] / 2.0,
            l_sdm: acc[TERM_SDM] / 2.0,
            l_fm: acc[TERM_FM] / 2.0,
            l_reg: reg / (2.0 * p_norm),
            total: 0.0,
        };
        if let Some(term) = values.non_finite_term() {
            return Err(Error::DivergedEvaluation { term: term.into() });
        }
        let total = w.w_f * values.l_f
            + w.w_b * values.l_b
            + w.w_i * values.l_i
            + w.w_vm * values.l_vm
            + w.w_sm * values.l_sm
            + w.w_sdm * values.l_sdm
            + w.w_fm * values.l_fm
            + w.lambda_reg * values.l_reg;
        if !total.is_finite() {
            return Err(Error::DivergedEvaluation {
                term: "total".into(),
            });
        }
        Ok(LossValues { total, ..values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::dpinn::model::{build_model, LossWeights, TrialMode};
    use crate::problems::{exact_steady, InitialProfile, Problem, SteadyAdvDiff, UnsteadyAdvection};

    fn steady_problem(eps: f64) -> Problem {
        Problem::SteadyAdvectionDiffusion(SteadyAdvDiff {
            c: 1.0,
            eps,
            x_left: 0.0,
            x_right: 1.0,
            u_left: 0.0,
            u_right: 1.0,
        })
    }

    fn unsteady_problem() -> Problem {
        Problem::UnsteadyAdvection(UnsteadyAdvection {
            speed: 0.5,
            x_left: 0.0,
            x_right: 1.0,
            t_start: 0.0,
            t_end: 1.0,
            initial: InitialProfile::SquarePulse {
                center: 0.25,
                width: 0.2,
                height: 1.0,
            },
        })
    }

    #[test]
    fn uniform_sampling_examples() {
        let p = steady_problem(0.2);
        let g1 = BlockGrid::for_problem(&p, 1, 1).unwrap();
        let c = sample_collocation(&g1, 2, 1, SamplingMode::Uniform, true, 0).unwrap();
        assert_eq!(c.block_x(0), &[0.0, 1.0]);

        let g5 = BlockGrid::for_problem(&p, 5, 1).unwrap();
        let c = sample_collocation(&g5, 3, 1, SamplingMode::Uniform, true, 0).unwrap();
        // second block spans [0.2, 0.4]
        let xs = c.block_x(1);
        assert!((xs[0] - 0.2).abs() < 1e-15);
        assert!((xs[1] - 0.3).abs() < 1e-15);
        assert!((xs[2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn random_sampling_stays_in_bounds_and_reproduces() {
        let p = unsteady_problem();
        let g = BlockGrid::for_problem(&p, 4, 3).unwrap();
        let c1 = sample_collocation(&g, 50, 20, SamplingMode::Random, true, 9).unwrap();
        let c2 = sample_collocation(&g, 50, 20, SamplingMode::Random, true, 9).unwrap();
        assert_eq!(c1, c2);
        let c3 = sample_collocation(&g, 50, 20, SamplingMode::Random, true, 10).unwrap();
        assert_ne!(c1, c3);
        for j in 0..3 {
            for i in 0..4 {
                let b = g.block_index(i, j);
                let (xa, xb) = g.x_extent(i);
                for &x in c1.block_x(b) {
                    assert!((xa..=xb).contains(&x));
                }
                let (ta, tb) = g.t_extent(j).unwrap();
                for &t in c1.block_t(b) {
                    assert!((ta..=tb).contains(&t));
                }
                assert!(c1.block_x(b).contains(&xa));
                assert!(c1.block_x(b).contains(&xb));
            }
        }
    }

    #[test]
    fn edge_inclusion_needs_two_points() {
        let p = steady_problem(0.2);
        let g = BlockGrid::for_problem(&p, 2, 1).unwrap();
        assert!(sample_collocation(&g, 1, 1, SamplingMode::Uniform, true, 0).is_err());
        assert!(sample_collocation(&g, 0, 1, SamplingMode::Uniform, false, 0).is_err());
    }

    #[test]
    fn single_block_has_no_interface_terms() {
        let p = steady_problem(0.3);
        let g = BlockGrid::for_problem(&p, 1, 1).unwrap();
        let m = build_model(
            &p,
            g,
            &[1, 3, 1],
            Activation::Tanh,
            TrialMode::Plain,
            LossWeights::default(),
            1,
        )
        .unwrap();
        let c = sample_collocation(&g, 10, 1, SamplingMode::Uniform, true, 0).unwrap();
        let b = m.loss_terms(&c).unwrap();
        assert_eq!(b.values.l_vm, 0.0);
        assert_eq!(b.values.l_sm, 0.0);
        assert_eq!(b.values.l_sdm, 0.0);
        assert_eq!(b.values.l_fm, 0.0);
        assert_eq!(b.g_vm, 0.0);
    }

    #[test]
    fn total_is_the_weighted_sum() {
        let p = unsteady_problem();
        let g = BlockGrid::for_problem(&p, 3, 2).unwrap();
        let weights = LossWeights {
            w_f: 2.0,
            w_b: 0.5,
            w_i: 1.5,
            w_vm: 3.0,
            w_sm: 0.25,
            w_sdm: 0.1,
            w_fm: 0.7,
            lambda_reg: 0.01,
        };
        let m = build_model(&p, g, &[2, 2, 1], Activation::Tanh, TrialMode::Plain, weights, 3)
            .unwrap();
        let c = sample_collocation(&g, 4, 4, SamplingMode::Uniform, true, 0).unwrap();
        let v = m.loss_values(&c).unwrap();
        let expect = 2.0 * v.l_f
            + 0.5 * v.l_b
            + 1.5 * v.l_i
            + 3.0 * v.l_vm
            + 0.25 * v.l_sm
            + 0.1 * v.l_sdm
            + 0.7 * v.l_fm
            + 0.01 * v.l_reg;
        assert!((v.total - expect).abs() <= 1e-12 * expect.abs());
        assert!(v.terms().iter().all(|&t| t >= 0.0));
    }

    /// Exact-solution model: with the exponent activation a [1,1,1] net can
    /// represent `a·e^{(c/eps)x} + b` exactly, so every block can be set to
    /// the closed-form solution.
    fn oracle_model(eps: f64, nbx: usize) -> BlockModel {
        let p = steady_problem(eps);
        let g = BlockGrid::for_problem(&p, nbx, 1).unwrap();
        let mut m = build_model(
            &p,
            g,
            &[1, 1, 1],
            Activation::Exponent,
            TrialMode::Plain,
            LossWeights::default(),
            0,
        )
        .unwrap();
        // u = (e^{rx} - 1)/(e^{rL} - 1) = w3·e^{r·x + 0} + b3
        let r = 1.0 / eps;
        let denom = r.exp_m1(); // e^r - 1 on the unit domain
        let w3 = 1.0 / denom;
        let b3 = -1.0 / denom;
        let mut flat = Vec::new();
        for _ in 0..nbx {
            flat.extend_from_slice(&[r, 0.0, w3, b3]);
        }
        m.set_flat(&flat).unwrap();
        m
    }

    #[test]
    fn exact_solution_model_has_vanishing_losses() {
        let m = oracle_model(0.5, 5);
        let c = sample_collocation(m.grid(), 8, 1, SamplingMode::Uniform, true, 0).unwrap();
        let v = m.loss_values(&c).unwrap();
        for (t, name) in v.terms().iter().zip(LossValues::TERM_NAMES) {
            if name == "l_reg" {
                continue; // parameters are not zero; reg measures them
            }
            assert!(*t < 1e-8, "{name} = {t}");
        }
        assert!(v.total < 1e-8);
    }

    #[test]
    fn exact_solution_model_predicts_exactly() {
        let m = oracle_model(0.5, 5);
        let p = SteadyAdvDiff {
            c: 1.0,
            eps: 0.5,
            x_left: 0.0,
            x_right: 1.0,
            u_left: 0.0,
            u_right: 1.0,
        };
        for k in 0..100 {
            let x = k as f64 / 99.0;
            let err = (m.predict(x, None).unwrap() - exact_steady(&p, x).unwrap()).abs();
            assert!(err < 1e-5, "x={x}: {err}");
        }
    }

    #[test]
    fn one_by_one_grid_matches_manual_pinn_loss() {
        // bit-identical reduction to L = L_f + L_b (+ L_i) on a single block
        let p = steady_problem(0.3);
        let g = BlockGrid::for_problem(&p, 1, 1).unwrap();
        let m = build_model(
            &p,
            g,
            &[1, 4, 1],
            Activation::Tanh,
            TrialMode::Plain,
            LossWeights {
                w_vm: 0.0,
                w_sm: 0.0,
                ..LossWeights::default()
            },
            7,
        )
        .unwrap();
        let c = sample_collocation(&g, 16, 1, SamplingMode::Uniform, true, 0).unwrap();
        let v = m.loss_values(&c).unwrap();

        // manual PINN: half-mean residual + half-sum boundary error
        let net = &m.nets()[0];
        let mut lf = 0.0;
        for &x in c.block_x(0) {
            let jet = net.evaluate(x, None).unwrap();
            let r = 0.3 * jet.d2_dx2 - jet.d_dx;
            lf += r * r;
        }
        lf /= 2.0 * 16.0;
        let u0 = net.evaluate(0.0, None).unwrap().value;
        let u1 = net.evaluate(1.0, None).unwrap().value;
        let lb = 0.5 * (u0 * u0 + (u1 - 1.0) * (u1 - 1.0));
        assert_eq!(v.l_f, lf);
        assert_eq!(v.l_b, lb);
        assert_eq!(v.total, lf + lb);
    }

    #[test]
    fn normalized_residual_obeys_chain_rule_scaling() {
        // scaled residual = dx · unscaled residual, for arbitrary nets
        let eps = 0.01;
        let p = steady_problem(eps);
        let nbx = 8;
        let g = BlockGrid::for_problem(&p, nbx, 1).unwrap();
        for seed in 0..20u64 {
            let m = build_model(
                &p,
                g,
                &[1, 3, 1],
                Activation::Tanh,
                TrialMode::Plain,
                LossWeights::default(),
                seed,
            )
            .unwrap()
            .with_normalization(true)
            .unwrap();
            let eff = m.effective_problem(None);
            let dx = g.dx();
            let mut ws = m.nets()[0].workspace();
            for k in 0..20 {
                let x = (k as f64 + 0.5) / 20.0;
                let (i, j) = g.owner(x, None).unwrap();
                let jet = m.eval_block_ws(&mut ws, i, j, x, None);
                let scaled = eff.residual(&jet);
                // map the xi-jet back to x-space derivatives
                let unscaled = eps * jet.d2_dx2 / (dx * dx) - 1.0 * jet.d_dx / dx;
                assert!(
                    (scaled - dx * unscaled).abs() <= 1e-12 * scaled.abs().max(1.0),
                    "seed {seed} x {x}: {scaled} vs {}",
                    dx * unscaled
                );
            }
        }
    }

    /// Finite-difference gradient of the total loss over the flat parameters.
    fn fd_total_gradient(model: &BlockModel, colloc: &Collocation) -> Vec<f64> {
        let h = 1e-6;
        let base = model.flatten();
        let mut probe = model.clone();
        let mut grad = vec![0.0; base.len()];
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + h;
            probe.set_flat(&p).unwrap();
            let up = probe.loss_values(colloc).unwrap().total;
            p[k] = base[k] - h;
            probe.set_flat(&p).unwrap();
            let dn = probe.loss_values(colloc).unwrap().total;
            grad[k] = (up - dn) / (2.0 * h);
        }
        grad
    }

    fn check_gradient(model: &BlockModel, colloc: &Collocation) {
        let mut grad = vec![0.0; model.param_count()];
        model.loss_and_gradient(colloc, None, &mut grad).unwrap();
        let fd = fd_total_gradient(model, colloc);
        for (k, (a, b)) in grad.iter().zip(&fd).enumerate() {
            let diff = (a - b).abs();
            let scale = a.abs().max(b.abs());
            assert!(
                diff <= 1e-9 || diff <= 1e-6 * scale,
                "param {k}: analytic {a} vs fd {b}"
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_across_configurations() {
        // steady, all interface terms + regularization active
        let p = steady_problem(0.2);
        let g = BlockGrid::for_problem(&p, 3, 1).unwrap();
        let weights = LossWeights {
            w_sdm: 0.4,
            w_fm: 0.6,
            lambda_reg: 0.05,
            ..LossWeights::default()
        };
        for trial in [
            TrialMode::Plain,
            TrialMode::LinearAugmented,
            TrialMode::BoundaryForced,
            TrialMode::BoundaryInterfaceForced,
        ] {
            let mut m =
                build_model(&p, g, &[1, 2, 1], Activation::Tanh, trial, weights, 11).unwrap();
            // move extras off their init so their gradients are generic
            let mut flat = m.flatten();
            for v in flat.iter_mut() {
                *v += 0.05;
            }
            m.set_flat(&flat).unwrap();
            let c = sample_collocation(&g, 4, 1, SamplingMode::Uniform, true, 2).unwrap();
            check_gradient(&m, &c);
        }

        // normalized steady
        let m = build_model(
            &p,
            g,
            &[1, 2, 1],
            Activation::Sigmoid,
            TrialMode::Plain,
            weights,
            5,
        )
        .unwrap()
        .with_normalization(true)
        .unwrap();
        let c = sample_collocation(&g, 4, 1, SamplingMode::Uniform, true, 3).unwrap();
        check_gradient(&m, &c);

        // flux collocation target
        let m = build_model(
            &p,
            g,
            &[1, 2, 1],
            Activation::Tanh,
            TrialMode::Plain,
            LossWeights::default(),
            6,
        )
        .unwrap()
        .with_collocation_target(CollocationTarget::Flux)
        .unwrap();
        check_gradient(&m, &c);

        // unsteady advection with t-interface matching
        let p = unsteady_problem();
        let g = BlockGrid::for_problem(&p, 2, 2).unwrap();
        let m = build_model(
            &p,
            g,
            &[2, 2, 1],
            Activation::Tanh,
            TrialMode::Plain,
            LossWeights::default(),
            4,
        )
        .unwrap()
        .with_t_interface_matching(true);
        let c = sample_collocation(&g, 3, 3, SamplingMode::Uniform, true, 4).unwrap();
        check_gradient(&m, &c);

        // Burgers residual (state-dependent adjoint)
        let p = Problem::Burgers(crate::problems::Burgers {
            eps: 0.1,
            x_left: 0.0,
            x_right: 1.0,
            t_start: 0.0,
            t_end: 1.0,
            initial: InitialProfile::Heaviside { jump: 0.4 },
        });
        let g = BlockGrid::for_problem(&p, 2, 1).unwrap();
        let m = build_model(
            &p,
            g,
            &[2, 3, 1],
            Activation::Tanh,
            TrialMode::Plain,
            LossWeights::default(),
            8,
        )
        .unwrap();
        let c = sample_collocation(&g, 3, 3, SamplingMode::Uniform, true, 5).unwrap();
        check_gradient(&m, &c);
    }

    #[test]
    fn per_term_gradient_norms_compose_into_total() {
        let p = unsteady_problem();
        let g = BlockGrid::for_problem(&p, 2, 2).unwrap();
        let m = build_model(
            &p,
            g,
            &[2, 2, 1],
            Activation::Tanh,
            TrialMode::Plain,
            LossWeights::default(),
            13,
        )
        .unwrap();
        let c = sample_collocation(&g, 3, 3, SamplingMode::Uniform, true, 0).unwrap();
        let b = m.loss_terms(&c).unwrap();
        let mut grad = vec![0.0; m.param_count()];
        let v = m.loss_and_gradient(&c, None, &mut grad).unwrap();
        assert_eq!(v, b.values);
        let n: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!((n - b.g_total).abs() <= 1e-10 * n.max(1.0));
        // triangle inequality ties the pieces together
        let sum_norms = b.g_f + b.g_b + b.g_i + b.g_vm + b.g_sm + b.g_sdm + b.g_fm + b.g_reg;
        assert!(b.g_total <= sum_norms + 1e-12);
    }
}
