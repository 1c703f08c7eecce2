//! Iterative training of block models, with the convergence aids studied in
//! the experiments: per-iteration resampling, diffusivity continuation,
//! recurrent domain splitting and the Lagrange-multiplier weight probe.

use crate::dpinn::grid::BlockGrid;
use crate::dpinn::loss::{linspace, sample_collocation, Collocation, LossBreakdown, SamplingMode};
use crate::dpinn::model::{build_model, mix_seed, BlockModel, LossWeights, TrialMode};
use crate::net::JetAdjoint;
use crate::optim::{step_lma, FirstOrder, LmaState, OptimizerKind};
use crate::problems::Problem;
use crate::activation::Activation;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Training options. Point counts are per block and per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the total loss drops below this; 0 disables the check.
    pub tolerance: f64,
    /// Redraw random collocation points before every iteration.
    pub resample_collocation: bool,
    /// Anneal the diffusivity linearly from 1 to its target over the run.
    pub continuation: bool,
    pub nbx_pts: usize,
    pub nbt_pts: usize,
    pub include_edges: bool,
    pub sampling: SamplingMode,
    pub seed: u64,
    pub log_stride: usize,
    /// Initial damping and adaptation factor for the LMA optimizer.
    pub lma_mu: f64,
    pub lma_nu: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            max_iters: 50_000,
            tolerance: 0.0,
            resample_collocation: false,
            continuation: false,
            nbx_pts: 10,
            nbt_pts: 10,
            include_edges: true,
            sampling: SamplingMode::Uniform,
            seed: 0,
            log_stride: 100,
            lma_mu: 1e-3,
            lma_nu: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("tolerance must be nonnegative".into()));
        }
        if self.log_stride == 0 {
            return Err(Error::InvalidConfig("log stride must be at least 1".into()));
        }
        if self.resample_collocation && self.sampling != SamplingMode::Random {
            return Err(Error::InvalidConfig(
                "resampling collocation requires random sampling".into(),
            ));
        }
        if !(self.lma_mu.is_finite() && self.lma_mu > 0.0 && self.lma_nu > 1.0) {
            return Err(Error::InvalidConfig("LMA damping parameters invalid".into()));
        }
        Ok(())
    }
}

/// Loss-term and gradient-norm history, one entry per logging stride.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    #[serde(flatten)]
    pub breakdown: LossBreakdown,
}

/// Linear diffusivity continuation: 1 at the first iteration, the target at
/// the last.
pub fn continuation_epsilon(iter: usize, max_iters: usize, eps_target: f64) -> f64 {
    1.0 + (eps_target - 1.0) * iter as f64 / max_iters as f64
}

const COLLOC_SALT: u64 = 0xC0110C;

/// Train a block model. Returns the trained model and the recorded trace.
///
/// With a fixed seed the whole run is deterministic: collocation draws are
/// derived from `(seed, iteration)` and all sums accumulate in a fixed order.
pub fn train(model: BlockModel, config: &TrainConfig) -> Result<(BlockModel, Trace)> {
    config.validate()?;
    if config.continuation && model.problem().eps().is_none() {
        return Err(Error::InvalidCombination(
            "continuation needs a problem with a diffusivity".into(),
        ));
    }
    match config.optimizer {
        OptimizerKind::Lma => train_lma(model, config),
        kind => train_first_order(model, config, kind),
    }
}

fn eps_override_at(model: &BlockModel, config: &TrainConfig, iter: usize) -> Option<f64> {
    if config.continuation {
        Some(continuation_epsilon(
            iter,
            config.max_iters,
            model.problem().eps().expect("validated"),
        ))
    } else {
        None
    }
}

fn draw(model: &BlockModel, config: &TrainConfig, iter: usize) -> Result<Collocation> {
    sample_collocation(
        model.grid(),
        config.nbx_pts,
        config.nbt_pts,
        config.sampling,
        config.include_edges,
        mix_seed(mix_seed(config.seed, COLLOC_SALT), iter as u64),
    )
}

fn train_first_order(
    mut model: BlockModel,
    config: &TrainConfig,
    kind: OptimizerKind,
) -> Result<(BlockModel, Trace)> {
    let mut opt = FirstOrder::new(kind, config.learning_rate)?;
    let mut params = model.flatten();
    let mut grad = vec![0.0; params.len()];
    let mut trace = Trace::default();
    let mut colloc = draw(&model, config, 0)?;
    let mut last_logged = usize::MAX;

    let diverge = |iter: usize, term: String, trace: &Trace| Error::DivergedTraining {
        iter,
        term,
        trace: Box::new(trace.clone()),
    };

    for iter in 0..config.max_iters {
        if config.resample_collocation && iter > 0 {
            colloc = draw(&model, config, iter)?;
        }
        let eps_over = eps_override_at(&model, config, iter);
        if iter % config.log_stride == 0 {
            let breakdown = match model.loss_terms_with_eps(&colloc, eps_over) {
                Ok(b) => b,
                Err(Error::DivergedEvaluation { term }) => return Err(diverge(iter, term, &trace)),
                Err(e) => return Err(e),
            };
            trace.entries.push(TraceEntry {
                iter,
                breakdown,
            });
            last_logged = iter;
        }
        let values = match model.loss_and_gradient(&colloc, eps_over, &mut grad) {
            Ok(v) => v,
            Err(Error::DivergedEvaluation { term }) => return Err(diverge(iter, term, &trace)),
            Err(e) => return Err(e),
        };
        if values.total < config.tolerance {
            if last_logged != iter {
                let breakdown = model.loss_terms_with_eps(&colloc, eps_over)?;
                trace.entries.push(TraceEntry { iter, breakdown });
            }
            return Ok((model, trace));
        }
        if let Err(Error::DivergedTraining { term, .. }) = opt.step(&mut params, &grad) {
            return Err(diverge(iter, term, &trace));
        }
        model.set_flat(&params)?;
    }
    // final state after the last step
    let colloc_final = if config.resample_collocation {
        draw(&model, config, config.max_iters)?
    } else {
        colloc
    };
    let eps_over = eps_override_at(&model, config, config.max_iters);
    let breakdown = model.loss_terms_with_eps(&colloc_final, eps_over)?;
    trace.entries.push(TraceEntry {
        iter: config.max_iters,
        breakdown,
    });
    Ok((model, trace))
}

/// Assemble the least-squares residual vector and Jacobian whose half squared
/// norm is exactly the weighted total loss.
fn assemble_lma_system(
    model: &BlockModel,
    colloc: &Collocation,
    eps_override: Option<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let grid = *model.grid();
    let eff = model.effective_problem(eps_override);
    let data = *model.problem();
    let w = model.weights;
    let n = model.param_count();
    let steady = grid.is_steady();
    let mut ws_a = model.nets()[0].workspace();
    let mut ws_b = model.nets()[0].workspace();
    let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut scratch = vec![0.0; n];

    let m = colloc.points_per_block() as f64;
    let sqrt_wf = (w.w_f / m).sqrt();
    for j in 0..grid.nbt() {
        for i in 0..grid.nbx() {
            let b = grid.block_index(i, j);
            let ts: Vec<Option<f64>> = if steady {
                vec![None]
            } else {
                colloc.block_t(b).iter().map(|&t| Some(t)).collect()
            };
            for &t in &ts {
                for &x in colloc.block_x(b) {
                    let jet = model.eval_block_ws(&mut ws_a, i, j, x, t);
                    let r = eff.residual(&jet);
                    let adj = eff.residual_adjoint(&jet);
                    scratch.iter_mut().for_each(|v| *v = 0.0);
                    let scaled = JetAdjoint {
                        value: sqrt_wf * adj.value,
                        d_dx: sqrt_wf * adj.d_dx,
                        d2_dx2: sqrt_wf * adj.d2_dx2,
                        d_dt: sqrt_wf * adj.d_dt,
                    };
                    model.backprop_block_ws(&mut ws_a, i, j, x, &scaled, &mut scratch);
                    rows.push((sqrt_wf * r, scratch.clone()));
                }
            }
        }
    }

    let (x0, x1) = grid.x_domain();
    let sqrt_wb = w.w_b.sqrt();
    for j in 0..grid.nbt() {
        let t_rows: Vec<Option<f64>> = match grid.t_extent(j) {
            None => vec![None],
            Some((ta, tb)) => linspace(ta, tb, colloc.nbt_pts()).into_iter().map(Some).collect(),
        };
        for &t in &t_rows {
            for (i, x, g) in [
                (0usize, x0, data.boundary_left(t)),
                (grid.nbx() - 1, x1, data.boundary_right(t)),
            ] {
                let jet = model.eval_block_ws(&mut ws_a, i, j, x, t);
                scratch.iter_mut().for_each(|v| *v = 0.0);
                model.backprop_block_ws(
                    &mut ws_a,
                    i,
                    j,
                    x,
                    &JetAdjoint::value(sqrt_wb),
                    &mut scratch,
                );
                rows.push((sqrt_wb * (jet.value - g), scratch.clone()));
            }
        }
    }

    for j in 0..grid.nbt() {
        let t_rows: Vec<Option<f64>> = match grid.t_extent(j) {
            None => vec![None],
            Some((ta, tb)) => linspace(ta, tb, colloc.nbt_pts()).into_iter().map(Some).collect(),
        };
        for k in 1..grid.nbx() {
            let x = grid.x_edge(k);
            for &t in &t_rows {
                let left = model.eval_block_ws(&mut ws_a, k - 1, j, x, t);
                let right = model.eval_block_ws(&mut ws_b, k, j, x, t);
                let fl = eff.interface_flux_adjoint(&left);
                let fr = eff.interface_flux_adjoint(&right);
                let entries: [(f64, f64, JetAdjoint, JetAdjoint); 4] = [
                    (
                        w.w_vm,
                        left.value - right.value,
                        JetAdjoint::value(1.0),
                        JetAdjoint::value(-1.0),
                    ),
                    (
                        w.w_sm,
                        left.d_dx - right.d_dx,
                        JetAdjoint { value: 0.0, d_dx: 1.0, d2_dx2: 0.0, d_dt: 0.0 },
                        JetAdjoint { value: 0.0, d_dx: -1.0, d2_dx2: 0.0, d_dt: 0.0 },
                    ),
                    (
                        w.w_sdm,
                        left.d2_dx2 - right.d2_dx2,
                        JetAdjoint { value: 0.0, d_dx: 0.0, d2_dx2: 1.0, d_dt: 0.0 },
                        JetAdjoint { value: 0.0, d_dx: 0.0, d2_dx2: -1.0, d_dt: 0.0 },
                    ),
                    (
                        w.w_fm,
                        eff.interface_flux(&left) - eff.interface_flux(&right),
                        fl,
                        JetAdjoint { value: -fr.value, d_dx: -fr.d_dx, d2_dx2: 0.0, d_dt: 0.0 },
                    ),
                ];
                for (weight, diff, la, ra) in entries {
                    if weight == 0.0 {
                        continue;
                    }
                    let s = weight.sqrt();
                    scratch.iter_mut().for_each(|v| *v = 0.0);
                    let la = JetAdjoint {
                        value: s * la.value,
                        d_dx: s * la.d_dx,
                        d2_dx2: s * la.d2_dx2,
                        d_dt: s * la.d_dt,
                    };
                    let ra = JetAdjoint {
                        value: s * ra.value,
                        d_dx: s * ra.d_dx,
                        d2_dx2: s * ra.d2_dx2,
                        d_dt: s * ra.d_dt,
                    };
                    model.backprop_block_ws(&mut ws_a, k - 1, j, x, &la, &mut scratch);
                    model.backprop_block_ws(&mut ws_b, k, j, x, &ra, &mut scratch);
                    rows.push((s * diff, scratch.clone()));
                }
            }
        }
    }

    if let Some((t_start, _)) = grid.t_domain() {
        let sqrt_wi = w.w_i.sqrt();
        for i in 0..grid.nbx() {
            let (xa, xb) = grid.x_extent(i);
            for x in linspace(xa, xb, colloc.nbx_pts()) {
                let jet = model.eval_block_ws(&mut ws_a, i, 0, x, Some(t_start));
                scratch.iter_mut().for_each(|v| *v = 0.0);
                model.backprop_block_ws(
                    &mut ws_a,
                    i,
                    0,
                    x,
                    &JetAdjoint::value(sqrt_wi),
                    &mut scratch,
                );
                rows.push((sqrt_wi * (jet.value - data.initial_value(x)), scratch.clone()));
            }
        }
    }

    if w.lambda_reg > 0.0 {
        let p_norm = model.extras_offset() as f64;
        let s = (w.lambda_reg / p_norm).sqrt();
        let flat = model.flatten();
        for (k, &v) in flat.iter().take(model.extras_offset()).enumerate() {
            scratch.iter_mut().for_each(|z| *z = 0.0);
            scratch[k] = s;
            rows.push((s * v, scratch.clone()));
        }
    }

    let nrows = rows.len();
    let mut res = DVector::zeros(nrows);
    let mut jac = DMatrix::zeros(nrows, n);
    for (r, (val, grad)) in rows.into_iter().enumerate() {
        res[r] = val;
        for (c, g) in grad.into_iter().enumerate() {
            jac[(r, c)] = g;
        }
    }
    Ok((res, jac))
}

fn train_lma(mut model: BlockModel, config: &TrainConfig) -> Result<(BlockModel, Trace)> {
    if !model.nets().iter().all(|n| n.single_hidden_layer()) {
        return Err(Error::UnsupportedArchitecture(
            "LMA training requires single-hidden-layer networks".into(),
        ));
    }
    let mut state = LmaState {
        mu: config.lma_mu,
        nu: config.lma_nu,
    };
    let mut params = model.flatten();
    let mut trace = Trace::default();
    let mut colloc = draw(&model, config, 0)?;
    let mut last_logged = usize::MAX;

    for iter in 0..config.max_iters {
        if config.resample_collocation && iter > 0 {
            colloc = draw(&model, config, iter)?;
        }
        let eps_over = eps_override_at(&model, config, iter);
        if iter % config.log_stride == 0 {
            let breakdown = model.loss_terms_with_eps(&colloc, eps_over)?;
            trace.entries.push(TraceEntry { iter, breakdown });
            last_logged = iter;
        }
        let values = model.loss_values_with_eps(&colloc, eps_over)?;
        if values.total < config.tolerance {
            if last_logged != iter {
                let breakdown = model.loss_terms_with_eps(&colloc, eps_over)?;
                trace.entries.push(TraceEntry { iter, breakdown });
            }
            return Ok((model, trace));
        }
        let (res, jac) = assemble_lma_system(&model, &colloc, eps_over)?;
        let mut probe = model.clone();
        let step = step_lma(&mut state, &mut params, &res, &jac, |p| {
            probe.set_flat(p)?;
            Ok(2.0 * probe.loss_values_with_eps(&colloc, eps_over)?.total)
        });
        match step {
            Ok(()) => model.set_flat(&params)?,
            Err(Error::SingularSystem(msg)) => {
                return Err(Error::SingularSystem(format!(
                    "at iteration {iter}: {msg}"
                )))
            }
            Err(e) => return Err(e),
        }
    }
    let eps_over = eps_override_at(&model, config, config.max_iters);
    let breakdown = model.loss_terms_with_eps(&colloc, eps_over)?;
    trace.entries.push(TraceEntry {
        iter: config.max_iters,
        breakdown,
    });
    Ok((model, trace))
}

/// Warm-started model built by recurrent domain splitting: train at one
/// block, double the block count (children inherit the parent's parameters),
/// retrain, until the target x-block count is reached.
pub fn recurrent_split_init(
    problem: &Problem,
    target: BlockGrid,
    widths: &[usize],
    activation: Activation,
    trial: TrialMode,
    weights: LossWeights,
    config: &TrainConfig,
) -> Result<BlockModel> {
    if !target.nbx().is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "recurrent split needs a power-of-two x-block target, got {}",
            target.nbx()
        )));
    }
    let start = BlockGrid::for_problem(problem, 1, target.nbt())?;
    let mut model = build_model(problem, start, widths, activation, trial, weights, config.seed)?;
    loop {
        let (trained, _) = train(model, config)?;
        model = trained;
        if model.grid().nbx() == target.nbx() {
            return Ok(model);
        }
        model = model.split_in_x()?;
    }
}

/// Least-squares Lagrange multipliers from the stationarity system of the
/// constrained formulation (experimental; singular systems are the expected
/// outcome when the constraint gradients degenerate).
///
/// Column order of the underlying system: boundary, value matching, slope
/// matching. The right-hand side is the negative collocation-loss gradient
/// with the sum convention (no mean).
pub fn lagrange_weights(
    model: &BlockModel,
    colloc: &Collocation,
) -> Result<(f64, f64, f64)> {
    let grid = *model.grid();
    let eff = model.effective_problem(None);
    let n = model.param_count();
    let steady = grid.is_steady();
    let mut ws_a = model.nets()[0].workspace();
    let mut ws_b = model.nets()[0].workspace();

    let mut a = DMatrix::zeros(n, 3);
    let mut b_vec = vec![0.0; n];
    let mut col_b = vec![0.0; n];
    let mut col_vm = vec![0.0; n];
    let mut col_sm = vec![0.0; n];

    // gradient of the summed collocation residual squared (B of the system)
    for j in 0..grid.nbt() {
        for i in 0..grid.nbx() {
            let bidx = grid.block_index(i, j);
            let ts: Vec<Option<f64>> = if steady {
                vec![None]
            } else {
                colloc.block_t(bidx).iter().map(|&t| Some(t)).collect()
            };
            for &t in &ts {
                for &x in colloc.block_x(bidx) {
                    let jet = model.eval_block_ws(&mut ws_a, i, j, x, t);
                    let r = eff.residual(&jet);
                    let adj = eff.residual_adjoint(&jet);
                    let scaled = JetAdjoint {
                        value: -r * adj.value,
                        d_dx: -r * adj.d_dx,
                        d2_dx2: -r * adj.d2_dx2,
                        d_dt: -r * adj.d_dt,
                    };
                    model.backprop_block_ws(&mut ws_a, i, j, x, &scaled, &mut b_vec);
                }
            }
        }
    }

    // columns: gradients of the raw constraint sums
    let (x0, x1) = grid.x_domain();
    for j in 0..grid.nbt() {
        let t_rows: Vec<Option<f64>> = match grid.t_extent(j) {
            None => vec![None],
            Some((ta, tb)) => linspace(ta, tb, colloc.nbt_pts()).into_iter().map(Some).collect(),
        };
        for &t in &t_rows {
            for (i, x) in [(0usize, x0), (grid.nbx() - 1, x1)] {
                model.eval_block_ws(&mut ws_a, i, j, x, t);
                model.backprop_block_ws(&mut ws_a, i, j, x, &JetAdjoint::value(1.0), &mut col_b);
            }
            for k in 1..grid.nbx() {
                let x = grid.x_edge(k);
                model.eval_block_ws(&mut ws_a, k - 1, j, x, t);
                model.eval_block_ws(&mut ws_b, k, j, x, t);
                model.backprop_block_ws(&mut ws_a, k - 1, j, x, &JetAdjoint::value(1.0), &mut col_vm);
                model.backprop_block_ws(&mut ws_b, k, j, x, &JetAdjoint::value(-1.0), &mut col_vm);
                let slope = JetAdjoint { value: 0.0, d_dx: 1.0, d2_dx2: 0.0, d_dt: 0.0 };
                let slope_neg = JetAdjoint { value: 0.0, d_dx: -1.0, d2_dx2: 0.0, d_dt: 0.0 };
                model.eval_block_ws(&mut ws_a, k - 1, j, x, t);
                model.eval_block_ws(&mut ws_b, k, j, x, t);
                model.backprop_block_ws(&mut ws_a, k - 1, j, x, &slope, &mut col_sm);
                model.backprop_block_ws(&mut ws_b, k, j, x, &slope_neg, &mut col_sm);
            }
        }
    }

    for k in 0..n {
        a[(k, 0)] = col_b[k];
        a[(k, 1)] = col_vm[k];
        a[(k, 2)] = col_sm[k];
    }
    let rhs = DVector::from_vec(b_vec);
    let lambda = solve_normal_equations(&a, &rhs)?;
    Ok((lambda[0], lambda[1], lambda[2]))
}

/// Least-squares solve `lambda = (AᵀA)⁻¹AᵀB`, rejecting singular or
/// non-finite normal systems.
pub fn solve_normal_equations(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let normal = a.transpose() * a;
    let rhs = a.transpose() * b;
    if normal.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(
            "non-finite entries in the normal system".into(),
        ));
    }
    let svd = normal.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::SingularSystem(format!(
            "normal matrix condition ~{:e} too large",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    normal
        .lu()
        .solve(&rhs)
        .filter(|sol| sol.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularSystem("normal solve failed".into()))
}
