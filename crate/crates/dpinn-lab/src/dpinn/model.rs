//! Block model: one small network per sub-domain, plus the trial-function
//! transforms that bake constraints into the prediction.

use crate::activation::Activation;
use crate::dpinn::grid::BlockGrid;
use crate::net::{DenseNet, JetAdjoint, NetJet, Workspace};
use crate::problems::Problem;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// How the raw network output is turned into the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialMode {
    /// The network itself is the trial function.
    Plain,
    /// `A·x + N(x)` with one trainable slope per block, to bias early
    /// training toward a linear fit.
    LinearAugmented,
    /// Boundary values forced exactly; interior blocks stay plain.
    BoundaryForced,
    /// Boundary and interface values forced exactly via shared trainable
    /// interface values. Steady 1-D grids only.
    BoundaryInterfaceForced,
}

/// What the collocation loss drives to zero at interior points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollocationTarget {
    /// The differential equation's residual.
    Residual,
    /// The flux expression itself (a deliberately defective probe: the
    /// integration constant is dropped).
    Flux,
}

/// Weights of the loss terms. Defaults: the four core terms plus the
/// initial-condition term at 1, second-derivative and flux matching off,
/// no regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_f: f64,
    pub w_b: f64,
    pub w_i: f64,
    pub w_vm: f64,
    pub w_sm: f64,
    pub w_sdm: f64,
    pub w_fm: f64,
    pub lambda_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_f: 1.0,
            w_b: 1.0,
            w_i: 1.0,
            w_vm: 1.0,
            w_sm: 1.0,
            w_sdm: 0.0,
            w_fm: 0.0,
            lambda_reg: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_f, self.w_b, self.w_i, self.w_vm, self.w_sm, self.w_sdm, self.w_fm,
            self.lambda_reg,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(
                "loss weights must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Scaling factor of the normalized residual: `N_B · eps / (x_R - x_L)`.
///
/// When every block is rescaled to a unit local coordinate, the steady
/// equation becomes `(N_B·eps/L)·u_ξξ - c·u_ξ = 0`, so this is the effective
/// diffusivity the normalized model actually solves with.
pub fn normalize_coefficient(problem: &Problem, grid: &BlockGrid) -> Result<f64> {
    let eps = problem.eps().ok_or_else(|| {
        Error::InvalidCombination("normalization needs a problem with a diffusivity".into())
    })?;
    let (x0, x1) = grid.x_domain();
    Ok(grid.nbx() as f64 * eps / (x1 - x0))
}

/// Domain-decomposed model: a grid of blocks, one network each.
#[derive(Debug, Clone)]
pub struct BlockModel {
    grid: BlockGrid,
    nets: Vec<DenseNet>,
    trial: TrialMode,
    pub weights: LossWeights,
    normalization: bool,
    target: CollocationTarget,
    problem: Problem,
    /// Trial-transform parameters outside the nets, appended to the flat
    /// parameter vector: one slope per block for `LinearAugmented`, the
    /// `nbx - 1` shared interface values for `BoundaryInterfaceForced`.
    extras: Vec<f64>,
    match_t_interfaces: bool,
}

/// Deterministic per-index seed derivation (splitmix64 over a combined key).
pub(crate) fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x632be59bd9b4e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Build a block model with independently seeded per-block networks.
///
/// The network input width must match the problem dimensionality (1 steady,
/// 2 unsteady). Nets are seeded from `(seed, block index)`, so the result is
/// deterministic and blocks are decorrelated.
pub fn build_model(
    problem: &Problem,
    grid: BlockGrid,
    widths: &[usize],
    activation: Activation,
    trial: TrialMode,
    weights: LossWeights,
    seed: u64,
) -> Result<BlockModel> {
    problem.validate()?;
    weights.validate()?;
    if widths.first() != Some(&problem.input_dim()) {
        return Err(Error::InvalidArchitecture(format!(
            "problem has {} input(s) but architecture starts with {:?}",
            problem.input_dim(),
            widths.first()
        )));
    }
    if trial == TrialMode::BoundaryInterfaceForced && !grid.is_steady() {
        return Err(Error::UnsupportedTrial(
            "boundary-interface forcing is defined for steady 1-D grids only".into(),
        ));
    }
    let nets = (0..grid.block_count())
        .map(|b| DenseNet::init_random(widths, activation, mix_seed(seed, b as u64)))
        .collect::<Result<Vec<_>>>()?;
    let extras = match trial {
        TrialMode::LinearAugmented => vec![0.0; grid.block_count()],
        TrialMode::BoundaryInterfaceForced => {
            // interface values start on the line between the boundary data
            let ul = problem.boundary_left(None);
            let ur = problem.boundary_right(None);
            (1..grid.nbx())
                .map(|i| {
                    let f = i as f64 / grid.nbx() as f64;
                    (1.0 - f) * ul + f * ur
                })
                .collect()
        }
        _ => Vec::new(),
    };
    Ok(BlockModel {
        grid,
        nets,
        trial,
        weights,
        normalization: false,
        target: CollocationTarget::Residual,
        problem: *problem,
        extras,
        match_t_interfaces: false,
    })
}

impl BlockModel {
    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn trial(&self) -> TrialMode {
        self.trial
    }

    pub fn nets(&self) -> &[DenseNet] {
        &self.nets
    }

    pub fn normalization(&self) -> bool {
        self.normalization
    }

    pub fn collocation_target(&self) -> CollocationTarget {
        self.target
    }

    pub fn match_t_interfaces(&self) -> bool {
        self.match_t_interfaces
    }

    pub fn extras(&self) -> &[f64] {
        &self.extras
    }

    /// Enable per-block rescaling to unit local coordinates. Steady only.
    pub fn with_normalization(mut self, on: bool) -> Result<Self> {
        if on && !self.grid.is_steady() {
            return Err(Error::InvalidCombination(
                "sub-domain normalization is defined for steady problems only".into(),
            ));
        }
        if on {
            normalize_coefficient(&self.problem, &self.grid)?;
        }
        self.normalization = on;
        Ok(self)
    }

    /// Force the flux expression instead of the residual at collocation
    /// points. Steady only.
    pub fn with_collocation_target(mut self, target: CollocationTarget) -> Result<Self> {
        if target == CollocationTarget::Flux
            && !matches!(self.problem, Problem::SteadyAdvectionDiffusion(_))
        {
            return Err(Error::InvalidCombination(
                "flux collocation is defined for the steady problem only".into(),
            ));
        }
        self.target = target;
        Ok(self)
    }

    /// Also match values across t-direction interfaces (extension toggle;
    /// the default matches across x-interfaces only).
    pub fn with_t_interface_matching(mut self, on: bool) -> Self {
        self.match_t_interfaces = on;
        self
    }

    /// Parameters across all nets plus trial extras.
    pub fn param_count(&self) -> usize {
        self.nets.iter().map(|n| n.param_count()).sum::<usize>() + self.extras.len()
    }

    /// Offset of block `b`'s net parameters in the flat vector.
    pub(crate) fn net_offset(&self, b: usize) -> usize {
        // all nets share an architecture
        b * self.nets[0].param_count()
    }

    pub(crate) fn extras_offset(&self) -> usize {
        self.nets.len() * self.nets[0].param_count()
    }

    /// Flat parameter vector: nets in block order, then trial extras.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for net in &self.nets {
            out.extend(net.flatten());
        }
        out.extend_from_slice(&self.extras);
        out
    }

    pub fn set_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let per = self.nets[0].param_count();
        for (b, net) in self.nets.iter_mut().enumerate() {
            net.set_flat(&params[b * per..(b + 1) * per])?;
        }
        let eo = self.extras_offset();
        self.extras.copy_from_slice(&params[eo..]);
        Ok(())
    }

    /// Map a global x into the net input coordinate of x-block `i`.
    pub(crate) fn net_input(&self, i: usize, x: f64) -> f64 {
        if self.normalization {
            let (a, b) = self.grid.x_extent(i);
            (x - a) / (b - a)
        } else {
            x
        }
    }

    /// Local-coordinate parameters of x-block `i`: `x_hat = (u - hat0) * hat_scale`.
    fn hat_params(&self, i: usize) -> (f64, f64) {
        if self.normalization {
            (0.0, 1.0)
        } else {
            let (a, b) = self.grid.x_extent(i);
            (a, 1.0 / (b - a))
        }
    }

    fn boundary_interface_values(&self, i: usize, t: Option<f64>) -> (f64, f64) {
        let nbx = self.grid.nbx();
        let left = if i == 0 {
            self.problem.boundary_left(t)
        } else {
            self.extras[i - 1]
        };
        let right = if i + 1 == nbx {
            self.problem.boundary_right(t)
        } else {
            self.extras[i]
        };
        (left, right)
    }

    /// Apply the trial transform of block `(i, j)` to a raw net jet,
    /// composing the transform derivatives exactly. All jets live in the net
    /// input coordinate.
    pub(crate) fn trial_forward_block(
        &self,
        i: usize,
        j: usize,
        u: f64,
        t: Option<f64>,
        raw: &NetJet,
    ) -> NetJet {
        let nbx = self.grid.nbx();
        match self.trial {
            TrialMode::Plain => *raw,
            TrialMode::LinearAugmented => {
                let a = self.extras[self.grid.block_index(i, j)];
                NetJet {
                    value: a * u + raw.value,
                    d_dx: a + raw.d_dx,
                    d2_dx2: raw.d2_dx2,
                    d_dt: raw.d_dt,
                }
            }
            TrialMode::BoundaryForced => {
                let (h0, hs) = self.hat_params(i);
                let xh = (u - h0) * hs;
                let touches_left = i == 0;
                let touches_right = i + 1 == nbx;
                match (touches_left, touches_right) {
                    (true, true) => {
                        let gl = self.problem.boundary_left(t);
                        let gr = self.problem.boundary_right(t);
                        let b = xh * (1.0 - xh);
                        let bp = (1.0 - 2.0 * xh) * hs;
                        let bpp = -2.0 * hs * hs;
                        NetJet {
                            value: (1.0 - xh) * gl + xh * gr + b * raw.value,
                            d_dx: (gr - gl) * hs + bp * raw.value + b * raw.d_dx,
                            d2_dx2: bpp * raw.value + 2.0 * bp * raw.d_dx + b * raw.d2_dx2,
                            d_dt: b * raw.d_dt,
                        }
                    }
                    (true, false) => {
                        let gl = self.problem.boundary_left(t);
                        NetJet {
                            value: gl + xh * raw.value,
                            d_dx: hs * raw.value + xh * raw.d_dx,
                            d2_dx2: 2.0 * hs * raw.d_dx + xh * raw.d2_dx2,
                            d_dt: xh * raw.d_dt,
                        }
                    }
                    (false, true) => {
                        let gr = self.problem.boundary_right(t);
                        let w = 1.0 - xh;
                        NetJet {
                            value: gr + w * raw.value,
                            d_dx: -hs * raw.value + w * raw.d_dx,
                            d2_dx2: -2.0 * hs * raw.d_dx + w * raw.d2_dx2,
                            d_dt: w * raw.d_dt,
                        }
                    }
                    (false, false) => *raw,
                }
            }
            TrialMode::BoundaryInterfaceForced => {
                let (h0, hs) = self.hat_params(i);
                let xh = (u - h0) * hs;
                let (vl, vr) = self.boundary_interface_values(i, t);
                let b = xh * (1.0 - xh);
                let bp = (1.0 - 2.0 * xh) * hs;
                let bpp = -2.0 * hs * hs;
                NetJet {
                    value: (1.0 - xh) * vl + xh * vr + b * raw.value,
                    d_dx: (vr - vl) * hs + bp * raw.value + b * raw.d_dx,
                    d2_dx2: bpp * raw.value + 2.0 * bp * raw.d_dx + b * raw.d2_dx2,
                    d_dt: b * raw.d_dt,
                }
            }
        }
    }

    /// Pull a trial-jet cotangent back onto the raw net jet, and accumulate
    /// the gradient of any trial extras into `extras_grad` (the slice
    /// starting at [`extras_offset`](Self::extras_offset)).
    pub(crate) fn trial_backward_block(
        &self,
        i: usize,
        j: usize,
        u: f64,
        tbar: &JetAdjoint,
        extras_grad: &mut [f64],
    ) -> JetAdjoint {
        let nbx = self.grid.nbx();
        match self.trial {
            TrialMode::Plain => *tbar,
            TrialMode::LinearAugmented => {
                let b = self.grid.block_index(i, j);
                extras_grad[b] += tbar.value * u + tbar.d_dx;
                *tbar
            }
            TrialMode::BoundaryForced => {
                let (h0, hs) = self.hat_params(i);
                let xh = (u - h0) * hs;
                let touches_left = i == 0;
                let touches_right = i + 1 == nbx;
                match (touches_left, touches_right) {
                    (true, true) => {
                        let b = xh * (1.0 - xh);
                        let bp = (1.0 - 2.0 * xh) * hs;
                        let bpp = -2.0 * hs * hs;
                        JetAdjoint {
                            value: tbar.value * b + tbar.d_dx * bp + tbar.d2_dx2 * bpp,
                            d_dx: tbar.d_dx * b + tbar.d2_dx2 * 2.0 * bp,
                            d2_dx2: tbar.d2_dx2 * b,
                            d_dt: tbar.d_dt * b,
                        }
                    }
                    (true, false) => JetAdjoint {
                        value: tbar.value * xh + tbar.d_dx * hs,
                        d_dx: tbar.d_dx * xh + tbar.d2_dx2 * 2.0 * hs,
                        d2_dx2: tbar.d2_dx2 * xh,
                        d_dt: tbar.d_dt * xh,
                    },
                    (false, true) => {
                        let w = 1.0 - xh;
                        JetAdjoint {
                            value: tbar.value * w - tbar.d_dx * hs,
                            d_dx: tbar.d_dx * w - tbar.d2_dx2 * 2.0 * hs,
                            d2_dx2: tbar.d2_dx2 * w,
                            d_dt: tbar.d_dt * w,
                        }
                    }
                    (false, false) => *tbar,
                }
            }
            TrialMode::BoundaryInterfaceForced => {
                let (h0, hs) = self.hat_params(i);
                let xh = (u - h0) * hs;
                let b = xh * (1.0 - xh);
                let bp = (1.0 - 2.0 * xh) * hs;
                let bpp = -2.0 * hs * hs;
                // shared interface values are trainable; boundary ends are not
                if i > 0 {
                    extras_grad[i - 1] += tbar.value * (1.0 - xh) - tbar.d_dx * hs;
                }
                if i + 1 < nbx {
                    extras_grad[i] += tbar.value * xh + tbar.d_dx * hs;
                }
                JetAdjoint {
                    value: tbar.value * b + tbar.d_dx * bp + tbar.d2_dx2 * bpp,
                    d_dx: tbar.d_dx * b + tbar.d2_dx2 * 2.0 * bp,
                    d2_dx2: tbar.d2_dx2 * b,
                    d_dt: tbar.d_dt * b,
                }
            }
        }
    }

    /// Trial jet of block `(i, j)` at a global point, writing the forward
    /// cache into `ws` for a following backprop.
    pub(crate) fn eval_block_ws(
        &self,
        ws: &mut Workspace,
        i: usize,
        j: usize,
        x: f64,
        t: Option<f64>,
    ) -> NetJet {
        let b = self.grid.block_index(i, j);
        let u = self.net_input(i, x);
        let raw = self.nets[b].forward_ws(ws, u, t);
        self.trial_forward_block(i, j, u, t, &raw)
    }

    /// Backprop a trial-jet cotangent at the point most recently forwarded
    /// through `ws` for block `(i, j)`, accumulating into the full flat
    /// gradient vector.
    pub(crate) fn backprop_block_ws(
        &self,
        ws: &mut Workspace,
        i: usize,
        j: usize,
        x: f64,
        tbar: &JetAdjoint,
        grad: &mut [f64],
    ) {
        let b = self.grid.block_index(i, j);
        let u = self.net_input(i, x);
        let eo = self.extras_offset();
        let (net_grad, extras_grad) = grad.split_at_mut(eo);
        let nbar = self.trial_backward_block(i, j, u, tbar, extras_grad);
        let per = self.nets[0].param_count();
        self.nets[b].backprop_ws(ws, &nbar, &mut net_grad[b * per..(b + 1) * per]);
    }

    /// Prediction at a point. The owning block is the later one for shared
    /// edges; values need no un-mapping under normalization.
    pub fn predict(&self, x: f64, t: Option<f64>) -> Result<f64> {
        if (self.problem.input_dim() == 2) != t.is_some() {
            return Err(Error::InvalidInput(
                "prediction point dimensionality does not match the problem".into(),
            ));
        }
        let (i, j) = self.grid.owner(x, t)?;
        let mut ws = self.nets[0].workspace();
        Ok(self.eval_block_ws(&mut ws, i, j, x, t).value)
    }

    /// Double the x-block count, each parent handing its parameters to both
    /// children. Trial extras follow: per-block slopes are duplicated, and
    /// forced interface values keep old interfaces and take the parent's
    /// prediction at the new ones.
    pub fn split_in_x(&self) -> Result<BlockModel> {
        let old = &self.grid;
        let grid = BlockGrid::for_problem(&self.problem, old.nbx() * 2, old.nbt())?;
        let mut nets = Vec::with_capacity(grid.block_count());
        for j in 0..old.nbt() {
            for i in 0..old.nbx() {
                let parent = &self.nets[old.block_index(i, j)];
                nets.push(parent.clone());
                nets.push(parent.clone());
            }
        }
        let extras = match self.trial {
            TrialMode::LinearAugmented => {
                let mut out = Vec::with_capacity(grid.block_count());
                for j in 0..old.nbt() {
                    for i in 0..old.nbx() {
                        let a = self.extras[old.block_index(i, j)];
                        out.push(a);
                        out.push(a);
                    }
                }
                out
            }
            TrialMode::BoundaryInterfaceForced => (1..grid.nbx())
                .map(|k| {
                    if k % 2 == 0 {
                        Ok(self.extras[k / 2 - 1])
                    } else {
                        // new interface at the parent block's midpoint
                        self.predict(0.5 * (grid.x_edge(k - 1) + grid.x_edge(k + 1)), None)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        Ok(BlockModel {
            grid,
            nets,
            trial: self.trial,
            weights: self.weights,
            normalization: self.normalization,
            target: self.target,
            problem: self.problem,
            extras,
            match_t_interfaces: self.match_t_interfaces,
        })
    }

    /// Problem used for residual/flux evaluation: continuation override
    /// first, then the normalization rescale of the diffusivity.
    pub(crate) fn effective_problem(&self, eps_override: Option<f64>) -> Problem {
        let mut p = self.problem;
        if let Some(eps) = eps_override {
            p = p.with_eps(eps);
        }
        if self.normalization {
            let scale = self.grid.nbx() as f64 / {
                let (x0, x1) = self.grid.x_domain();
                x1 - x0
            };
            if let Some(eps) = p.eps() {
                p = p.with_eps(eps * scale);
            }
        }
        p
    }
}
