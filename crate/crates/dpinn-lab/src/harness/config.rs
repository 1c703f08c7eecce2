//! JSON experiment configuration: strict schema, validation, canonical
//! hashing, and sweep-axis application.

use crate::activation::Activation;
use crate::dpinn::{CollocationTarget, LossWeights, SamplingMode, TrainConfig, TrialMode};
use crate::optim::OptimizerKind;
use crate::problems::Problem;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Network / decomposition block of a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub nbx: usize,
    pub nbt: usize,
    /// Hidden layer count; all hidden layers share `neurons`.
    pub layers: usize,
    pub neurons: usize,
    pub activation: Activation,
    pub trial: TrialMode,
    pub normalization: bool,
    pub collocation_target: CollocationTarget,
    /// Extension toggle: also match values across t-interfaces.
    pub match_t_interfaces: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            nbx: 1,
            nbt: 1,
            layers: 1,
            neurons: 2,
            activation: Activation::Tanh,
            trial: TrialMode::Plain,
            normalization: false,
            collocation_target: CollocationTarget::Residual,
            match_t_interfaces: false,
        }
    }
}

impl ModelConfig {
    /// Layer widths for the given problem dimensionality.
    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.layers + 2);
        w.push(input_dim);
        w.extend(std::iter::repeat(self.neurons).take(self.layers));
        w.push(1);
        w
    }
}

/// Loss-term weights and collocation-point policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub w_f: f64,
    pub w_b: f64,
    pub w_i: f64,
    pub w_vm: f64,
    pub w_sm: f64,
    pub w_sdm: f64,
    pub w_fm: f64,
    pub lambda_reg: f64,
    pub x_points_per_block: usize,
    pub t_points_per_block: usize,
    pub include_edges: bool,
    pub sampling: SamplingMode,
    /// Redraw random collocation points before every iteration.
    pub resample: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        LossConfig {
            w_f: w.w_f,
            w_b: w.w_b,
            w_i: w.w_i,
            w_vm: w.w_vm,
            w_sm: w.w_sm,
            w_sdm: w.w_sdm,
            w_fm: w.w_fm,
            lambda_reg: w.lambda_reg,
            x_points_per_block: 10,
            t_points_per_block: 10,
            include_edges: true,
            sampling: SamplingMode::Uniform,
            resample: false,
        }
    }
}

impl LossConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            w_f: self.w_f,
            w_b: self.w_b,
            w_i: self.w_i,
            w_vm: self.w_vm,
            w_sm: self.w_sm,
            w_sdm: self.w_sdm,
            w_fm: self.w_fm,
            lambda_reg: self.lambda_reg,
        }
    }
}

/// Iterative-training block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub continuation: bool,
    pub seed: u64,
    pub log_stride: usize,
    pub lma_mu: f64,
    pub lma_nu: f64,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainBlock {
            optimizer: t.optimizer,
            learning_rate: t.learning_rate,
            max_iters: t.max_iters,
            tolerance: t.tolerance,
            continuation: t.continuation,
            seed: t.seed,
            log_stride: t.log_stride,
            lma_mu: t.lma_mu,
            lma_nu: t.lma_nu,
        }
    }
}

/// ELM solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElmSolverKind {
    Exact,
    Pinv,
}

/// Single-shot ELM block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElmBlock {
    pub neurons_per_block: usize,
    pub solver: ElmSolverKind,
    /// Scale of the frozen random hidden layer.
    pub gain: f64,
    pub seed: u64,
    pub pinv_cutoff: f64,
}

impl Default for ElmBlock {
    fn default() -> Self {
        ElmBlock {
            neurons_per_block: 12,
            solver: ElmSolverKind::Exact,
            gain: 1.0,
            seed: 0,
            pinv_cutoff: crate::elm::DEFAULT_PINV_CUTOFF,
        }
    }
}

/// One experiment: a problem, a model, a loss policy, and exactly one of an
/// iterative `train` block or a single-shot `elm` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elm: Option<ElmBlock>,
}

impl ExperimentConfig {
    /// Parse and validate a config from JSON text, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        match (&self.train, &self.elm) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "config must carry exactly one of `train` or `elm`, got both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "config must carry exactly one of `train` or `elm`".into(),
                ))
            }
            _ => {}
        }
        if self.model.nbx == 0 || self.model.nbt == 0 {
            return Err(Error::InvalidConfig("block counts must be at least 1".into()));
        }
        if self.model.layers == 0 || self.model.neurons == 0 {
            return Err(Error::InvalidConfig(
                "need at least one hidden layer with at least one neuron".into(),
            ));
        }
        if self.elm.is_some() {
            if !matches!(self.problem, Problem::SteadyAdvectionDiffusion(_)) {
                return Err(Error::InvalidConfig(
                    "ELM solves are defined for the steady problem".into(),
                ));
            }
            if self.elm.unwrap().neurons_per_block == 0 {
                return Err(Error::InvalidConfig("ELM needs at least one neuron".into()));
            }
        }
        self.loss.weights().validate()?;
        if let Some(t) = &self.train {
            self.train_config_with(t).validate()?;
        }
        Ok(())
    }

    fn train_config_with(&self, t: &TrainBlock) -> TrainConfig {
        TrainConfig {
            optimizer: t.optimizer,
            learning_rate: t.learning_rate,
            max_iters: t.max_iters,
            tolerance: t.tolerance,
            resample_collocation: self.loss.resample,
            continuation: t.continuation,
            nbx_pts: self.loss.x_points_per_block,
            nbt_pts: self.loss.t_points_per_block,
            include_edges: self.loss.include_edges,
            sampling: self.loss.sampling,
            seed: t.seed,
            log_stride: t.log_stride,
            lma_mu: t.lma_mu,
            lma_nu: t.lma_nu,
        }
    }

    /// Training options assembled from the `train` and `loss` blocks.
    pub fn train_config(&self) -> Option<TrainConfig> {
        self.train.as_ref().map(|t| self.train_config_with(t))
    }

    /// Effective run seed: the train or elm block's.
    pub fn seed(&self) -> u64 {
        self.train
            .map(|t| t.seed)
            .or(self.elm.map(|e| e.seed))
            .unwrap_or(0)
    }

    /// Override the effective seed in whichever block is present.
    pub fn set_seed(&mut self, seed: u64) {
        if let Some(t) = &mut self.train {
            t.seed = seed;
        }
        if let Some(e) = &mut self.elm {
            e.seed = seed;
        }
    }

    pub fn set_log_stride(&mut self, stride: usize) {
        if let Some(t) = &mut self.train {
            t.log_stride = stride;
        }
    }
}

/// Canonical JSON of any serializable value: object keys sorted (serde_json
/// maps are ordered), floats in shortest round-trip form.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(&serde_json::to_value(value)?)?)
}

/// Stable hex hash of a config, identical across platforms for identical
/// configs.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let canon = canonical_json(value)?;
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One sweep axis: a dotted config path and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<serde_json::Value>,
}

/// Cartesian-product sweep around a base experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub axes: Vec<SweepAxis>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Largest cell product a sweep may declare.
    pub const MAX_CELLS: usize = 100_000;

    /// Cell count above which validation stops pre-checking every cell and
    /// only verifies that axis paths resolve.
    const FULL_VALIDATION_CELLS: usize = 1024;

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.axes.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one axis".into()));
        }
        let mut cells: usize = 1;
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "axis `{}` has no values",
                    axis.path
                )));
            }
            cells = cells
                .checked_mul(axis.values.len())
                .filter(|&c| c <= Self::MAX_CELLS)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "sweep exceeds {} cells",
                        Self::MAX_CELLS
                    ))
                })?;
        }
        if cells <= Self::FULL_VALIDATION_CELLS {
            // every cell must resolve and validate
            for cell in 0..cells {
                self.cell_config(cell)?;
            }
        } else {
            // at least every axis path must resolve against the base
            let mut scratch = serde_json::to_value(&self.base)?;
            for axis in &self.axes {
                set_path(&mut scratch, &axis.path, axis.values[0].clone())?;
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Axis value indices of a flat cell index (last axis fastest).
    pub fn cell_indices(&self, cell: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        let mut rem = cell;
        for (k, axis) in self.axes.iter().enumerate().rev() {
            idx[k] = rem % axis.values.len();
            rem /= axis.values.len();
        }
        idx
    }

    /// Resolved, validated config of one cell.
    pub fn cell_config(&self, cell: usize) -> Result<ExperimentConfig> {
        let idx = self.cell_indices(cell);
        let mut value = serde_json::to_value(&self.base)?;
        for (axis, &i) in self.axes.iter().zip(&idx) {
            set_path(&mut value, &axis.path, axis.values[i].clone())?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The axis assignment of a cell as a sorted `path -> value` map.
    pub fn cell_assignment(&self, cell: usize) -> Vec<(String, serde_json::Value)> {
        let idx = self.cell_indices(cell);
        let mut pairs: Vec<(String, serde_json::Value)> = self
            .axes
            .iter()
            .zip(&idx)
            .map(|(a, &i)| (a.path.clone(), a.values[i].clone()))
            .collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        pairs
    }
}

/// Set a dotted path inside a JSON object tree. The full path must already
/// exist (axes override fields, they cannot invent them), except that the
/// leaf may be absent inside an existing optional block.
fn set_path(root: &mut serde_json::Value, path: &str, new: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("malformed axis path `{path}`")));
    }
    for (k, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "axis path `{path}`: `{}` is not an object",
                parts[..k].join(".")
            ))
        })?;
        if k + 1 == parts.len() {
            if !obj.contains_key(*part) {
                // allow setting a defaulted field that serialization omitted,
                // but only under a block that exists
                obj.insert((*part).to_string(), new);
                return Ok(());
            }
            obj[*part] = new;
            return Ok(());
        }
        cur = obj.get_mut(*part).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "axis path `{path}` does not resolve: missing `{part}`"
            ))
        })?;
    }
    unreachable!()
}
