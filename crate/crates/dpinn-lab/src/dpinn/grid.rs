//! Uniform block decomposition of the problem domain.

use crate::problems::Problem;
use crate::{Error, Result};

/// Grid of `nbx × nbt` uniform sub-domain blocks. `nbt = 1` for steady
/// problems, which carry no t-extent at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGrid {
    nbx: usize,
    nbt: usize,
    x0: f64,
    x1: f64,
    t_span: Option<(f64, f64)>,
}

impl BlockGrid {
    /// Grid over the problem's own domain.
    pub fn for_problem(problem: &Problem, nbx: usize, nbt: usize) -> Result<Self> {
        if nbx == 0 || nbt == 0 {
            return Err(Error::InvalidConfig(format!(
                "block counts must be at least 1, got {nbx}x{nbt}"
            )));
        }
        let (x0, x1) = problem.x_domain();
        let t_span = problem.t_domain();
        if t_span.is_none() && nbt != 1 {
            return Err(Error::InvalidConfig(format!(
                "steady problems take nbt = 1, got {nbt}"
            )));
        }
        Ok(BlockGrid {
            nbx,
            nbt,
            x0,
            x1,
            t_span,
        })
    }

    pub fn nbx(&self) -> usize {
        self.nbx
    }

    pub fn nbt(&self) -> usize {
        self.nbt
    }

    pub fn block_count(&self) -> usize {
        self.nbx * self.nbt
    }

    pub fn x_domain(&self) -> (f64, f64) {
        (self.x0, self.x1)
    }

    pub fn t_domain(&self) -> Option<(f64, f64)> {
        self.t_span
    }

    pub fn is_steady(&self) -> bool {
        self.t_span.is_none()
    }

    /// Width of one block in x.
    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / self.nbx as f64
    }

    /// Height of one block in t.
    pub fn dt(&self) -> Option<f64> {
        self.t_span.map(|(t0, t1)| (t1 - t0) / self.nbt as f64)
    }

    /// i-th x edge, `i` in `0..=nbx`. Exact at both domain ends, and shared
    /// edges evaluate identically from either side.
    pub fn x_edge(&self, i: usize) -> f64 {
        let n = self.nbx as f64;
        ((self.nbx - i) as f64 * self.x0 + i as f64 * self.x1) / n
    }

    /// j-th t edge, `j` in `0..=nbt`.
    pub fn t_edge(&self, j: usize) -> Option<f64> {
        self.t_span.map(|(t0, t1)| {
            let n = self.nbt as f64;
            ((self.nbt - j) as f64 * t0 + j as f64 * t1) / n
        })
    }

    pub fn x_extent(&self, i: usize) -> (f64, f64) {
        (self.x_edge(i), self.x_edge(i + 1))
    }

    pub fn t_extent(&self, j: usize) -> Option<(f64, f64)> {
        Some((self.t_edge(j)?, self.t_edge(j + 1)?))
    }

    /// Flat index of block `(i, j)`: row-major with x fastest.
    pub fn block_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nbx && j < self.nbt);
        j * self.nbx + i
    }

    /// Owning block of a point. A shared edge belongs to the later block;
    /// the global right/upper edge belongs to the last block.
    pub fn owner(&self, x: f64, t: Option<f64>) -> Result<(usize, usize)> {
        let slack = 1e-9 * (1.0 + (self.x1 - self.x0).abs());
        if x < self.x0 - slack || x > self.x1 + slack {
            return Err(Error::OutsideDomain(format!(
                "x = {x} outside [{}, {}]",
                self.x0, self.x1
            )));
        }
        let fx = (x - self.x0) / (self.x1 - self.x0) * self.nbx as f64;
        let i = (fx.floor() as isize).clamp(0, self.nbx as isize - 1) as usize;
        let j = match (self.t_span, t) {
            (None, _) => 0,
            (Some((t0, t1)), Some(t)) => {
                let slack_t = 1e-9 * (1.0 + (t1 - t0).abs());
                if t < t0 - slack_t || t > t1 + slack_t {
                    return Err(Error::OutsideDomain(format!(
                        "t = {t} outside [{t0}, {t1}]"
                    )));
                }
                let ft = (t - t0) / (t1 - t0) * self.nbt as f64;
                (ft.floor() as isize).clamp(0, self.nbt as isize - 1) as usize
            }
            (Some(_), None) => {
                return Err(Error::InvalidInput(
                    "unsteady grid requires a t coordinate".into(),
                ))
            }
        };
        Ok((i, j))
    }
}
