//! Tiny dense feed-forward networks with exact derivatives.
//!
//! The forward pass propagates a second-order jet through every layer, so a
//! single evaluation yields the output value together with its exact first
//! and second x-derivatives and first t-derivative. Parameter gradients of
//! any scalar built from those jet components come from a reverse pass over
//! the cached forward state ([`DenseNet::backprop_ws`]); the extra derivative
//! order this needs is why [`Activation::derivs`] goes up to `f'''`.
//!
//! Parameter flattening order (used by [`DenseNet::flatten`], gradient
//! buffers and Jacobian columns): layers in forward order; within a layer the
//! weight matrix row-major (out × in), then the bias vector.

use crate::activation::Activation;
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Output of one network evaluation: value and exact input derivatives.
///
/// `d_dt` is identically zero for 1-D (x-only) networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetJet {
    pub value: f64,
    pub d_dx: f64,
    pub d2_dx2: f64,
    pub d_dt: f64,
}

impl NetJet {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.d_dx.is_finite()
            && self.d2_dx2.is_finite()
            && self.d_dt.is_finite()
    }
}

/// Cotangent seed for the reverse pass: the partial derivatives of some
/// scalar loss with respect to each component of a [`NetJet`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JetAdjoint {
    pub value: f64,
    pub d_dx: f64,
    pub d2_dx2: f64,
    pub d_dt: f64,
}

impl JetAdjoint {
    /// Seed only the value channel.
    pub fn value(w: f64) -> Self {
        JetAdjoint {
            value: w,
            ..Default::default()
        }
    }
}

/// Evaluation point; `t` is `None` for 1-D problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub t: Option<f64>,
}

impl Point {
    pub fn x(x: f64) -> Self {
        Point { x, t: None }
    }

    pub fn xt(x: f64, t: f64) -> Self {
        Point { x, t: Some(t) }
    }
}

/// Internal jet carried per neuron: value, dx, dxx, dt.
#[derive(Debug, Clone, Copy, Default)]
struct Jet4 {
    v: f64,
    x: f64,
    xx: f64,
    t: f64,
}

/// Dense feed-forward network.
///
/// The first width is the input count (1 or 2), the last is 1. The
/// activation applies to all hidden layers; the output layer is affine.
#[derive(Debug, Clone)]
pub struct DenseNet {
    widths: Vec<usize>,
    /// Per layer, row-major (out × in).
    weights: Vec<Vec<f64>>,
    /// Per layer, length = out.
    biases: Vec<Vec<f64>>,
    activation: Activation,
    /// Flat-vector offset of each layer's parameters.
    offsets: Vec<usize>,
}

/// Reusable forward/backward scratch for one network shape.
///
/// Holds the cached jets of the latest [`DenseNet::forward_ws`] call, which
/// is exactly the state [`DenseNet::backprop_ws`] consumes.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// a[0] = input jets; a[l+1] = output of layer l (post-activation for
    /// hidden layers, raw affine for the last).
    a: Vec<Vec<Jet4>>,
    /// Pre-activation jets per layer.
    z: Vec<Vec<Jet4>>,
    /// Activation derivative table `[f, f', f'', f''']` per hidden layer.
    d: Vec<Vec<[f64; 4]>>,
    /// Reverse-pass scratch, sized to the widest layer.
    zbar: Vec<Jet4>,
    abar: Vec<Jet4>,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least input and output widths, got {widths:?}"
        )));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::InvalidArchitecture(format!(
            "zero-sized layer in {widths:?}"
        )));
    }
    if widths[0] != 1 && widths[0] != 2 {
        return Err(Error::InvalidArchitecture(format!(
            "input width must be 1 or 2, got {}",
            widths[0]
        )));
    }
    if *widths.last().unwrap() != 1 {
        return Err(Error::InvalidArchitecture(format!(
            "output width must be 1, got {}",
            widths.last().unwrap()
        )));
    }
    Ok(())
}

impl DenseNet {
    /// Network with all parameters zero.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        validate_widths(widths)?;
        let weights: Vec<Vec<f64>> = widths
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases: Vec<Vec<f64>> = widths[1..].iter().map(|&w| vec![0.0; w]).collect();
        let mut offsets = Vec::with_capacity(weights.len());
        let mut off = 0;
        for w in widths.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        Ok(DenseNet {
            widths: widths.to_vec(),
            weights,
            biases,
            activation,
            offsets,
        })
    }

    /// Random network: every parameter uniform in `[-1, 1]` scaled by
    /// `1/sqrt(fan_in)` of its layer. Identical `(widths, seed)` produce
    /// bit-identical parameters on every platform.
    pub fn init_random(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.weights.len() {
            let bound = 1.0 / (net.widths[l] as f64).sqrt();
            for w in &mut net.weights[l] {
                *w = rng.gen_range(-bound..=bound);
            }
            for b in &mut net.biases[l] {
                *b = rng.gen_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Number of layers (affine transforms).
    fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    /// True when the net has exactly one hidden layer.
    pub fn single_hidden_layer(&self) -> bool {
        self.widths.len() == 3
    }

    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// All parameters in the documented flattening order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.layer_count() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn set_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut k = 0;
        for l in 0..self.weights.len() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&params[k..k + nw]);
            k += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&params[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Fresh scratch sized for this architecture.
    pub fn workspace(&self) -> Workspace {
        let max_w = *self.widths.iter().max().unwrap();
        Workspace {
            a: self.widths.iter().map(|&w| vec![Jet4::default(); w]).collect(),
            z: self.widths[1..]
                .iter()
                .map(|&w| vec![Jet4::default(); w])
                .collect(),
            d: self.widths[1..self.widths.len() - 1]
                .iter()
                .map(|&w| vec![[0.0; 4]; w])
                .collect(),
            zbar: vec![Jet4::default(); max_w],
            abar: vec![Jet4::default(); max_w],
        }
    }

    /// Checked evaluation; returns the exact jet at `(x, t)`.
    pub fn evaluate(&self, x: f64, t: Option<f64>) -> Result<NetJet> {
        let want_t = self.widths[0] == 2;
        if want_t != t.is_some() {
            return Err(Error::InvalidInput(format!(
                "network takes {} input(s) but t is {}",
                self.widths[0],
                if t.is_some() { "present" } else { "absent" }
            )));
        }
        let mut ws = self.workspace();
        Ok(self.forward_ws(&mut ws, x, t))
    }

    /// Unchecked hot-path evaluation into a caller-owned workspace.
    ///
    /// The workspace retains the cached state needed by
    /// [`backprop_ws`](Self::backprop_ws).
    pub fn forward_ws(&self, ws: &mut Workspace, x: f64, t: Option<f64>) -> NetJet {
        debug_assert_eq!(self.widths[0] == 2, t.is_some());
        ws.a[0][0] = Jet4 {
            v: x,
            x: 1.0,
            xx: 0.0,
            t: 0.0,
        };
        if let Some(t) = t {
            ws.a[0][1] = Jet4 {
                v: t,
                x: 0.0,
                xx: 0.0,
                t: 1.0,
            };
        }
        let layers = self.layer_count();
        for l in 0..layers {
            let in_w = self.widths[l];
            let wmat = &self.weights[l];
            let (head, tail) = ws.a.split_at_mut(l + 1);
            let a_in = &head[l][..in_w];
            let a_out = &mut tail[0];
            let zs = &mut ws.z[l];
            // affine: all four jet channels are linear in the inputs
            for ((z_slot, row), &b) in zs
                .iter_mut()
                .zip(wmat.chunks_exact(in_w))
                .zip(&self.biases[l])
            {
                let mut z = Jet4 {
                    v: b,
                    ..Jet4::default()
                };
                for (&w, ain) in row.iter().zip(a_in) {
                    z.v += w * ain.v;
                    z.x += w * ain.x;
                    z.xx += w * ain.xx;
                    z.t += w * ain.t;
                }
                *z_slot = z;
            }
            if l < layers - 1 {
                // hidden layer: chain the activation through the jet
                let act = self.activation;
                for ((a_slot, &z), d_slot) in
                    a_out.iter_mut().zip(zs.iter()).zip(ws.d[l].iter_mut())
                {
                    let dv = act.derivs(z.v);
                    *d_slot = dv;
                    *a_slot = Jet4 {
                        v: dv[0],
                        x: dv[1] * z.x,
                        xx: dv[2] * z.x * z.x + dv[1] * z.xx,
                        t: dv[1] * z.t,
                    };
                }
            } else {
                a_out.copy_from_slice(zs);
            }
        }
        let out = ws.a[layers][0];
        NetJet {
            value: out.v,
            d_dx: out.x,
            d2_dx2: out.xx,
            d_dt: out.t,
        }
    }

    /// Reverse pass: accumulate `seed · ∂(jet)/∂θ` into `grad` (flattening
    /// order), using the forward state left in `ws` by the latest
    /// [`forward_ws`](Self::forward_ws) call on the same point.
    pub fn backprop_ws(&self, ws: &mut Workspace, seed: &JetAdjoint, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.param_count());
        let layers = self.layer_count();
        ws.zbar[0] = Jet4 {
            v: seed.value,
            x: seed.d_dx,
            xx: seed.d2_dx2,
            t: seed.d_dt,
        };
        for l in (0..layers).rev() {
            let in_w = self.widths[l];
            let out_w = self.widths[l + 1];
            let base = self.offsets[l];
            let wmat = &self.weights[l];
            let a_in = &ws.a[l][..in_w];
            let abar = &mut ws.abar[..in_w];
            abar.fill(Jet4::default());
            let (wgrad, bgrad) = grad[base..base + out_w * in_w + out_w].split_at_mut(out_w * in_w);
            for (((zb, grow), wrow), bg) in ws.zbar[..out_w]
                .iter()
                .zip(wgrad.chunks_exact_mut(in_w))
                .zip(wmat.chunks_exact(in_w))
                .zip(bgrad.iter_mut())
            {
                for (((g, &w), ain), ab) in grow
                    .iter_mut()
                    .zip(wrow)
                    .zip(a_in.iter())
                    .zip(abar.iter_mut())
                {
                    *g += zb.v * ain.v + zb.x * ain.x + zb.xx * ain.xx + zb.t * ain.t;
                    ab.v += w * zb.v;
                    ab.x += w * zb.x;
                    ab.xx += w * zb.xx;
                    ab.t += w * zb.t;
                }
                *bg += zb.v;
            }
            if l == 0 {
                break;
            }
            // pull the adjoint back through the activation of layer l-1
            for (((zbar, ab), &z), &[_, f1, f2, f3]) in ws.zbar[..in_w]
                .iter_mut()
                .zip(ws.abar[..in_w].iter())
                .zip(ws.z[l - 1].iter())
                .zip(ws.d[l - 1].iter())
            {
                *zbar = Jet4 {
                    v: ab.v * f1
                        + ab.x * f2 * z.x
                        + ab.xx * (f3 * z.x * z.x + f2 * z.xx)
                        + ab.t * f2 * z.t,
                    x: ab.x * f1 + ab.xx * 2.0 * f2 * z.x,
                    xx: ab.xx * f1,
                    t: ab.t * f1,
                };
            }
        }
    }
}

/// Gradient of a scalar loss of the jets at a point batch, with respect to
/// every network parameter (flattening order).
///
/// The `loss` callback receives the jets at all `points` and returns the
/// loss value together with its partial derivatives with respect to each
/// jet's components.
pub fn loss_gradient<L>(net: &DenseNet, points: &[Point], loss: L) -> Result<(f64, Vec<f64>)>
where
    L: FnOnce(&[NetJet]) -> (f64, Vec<JetAdjoint>),
{
    let jets: Vec<NetJet> = points
        .iter()
        .map(|p| net.evaluate(p.x, p.t))
        .collect::<Result<_>>()?;
    let (value, adjoints) = loss(&jets);
    if !value.is_finite() {
        return Err(Error::DivergedEvaluation {
            term: "loss".into(),
        });
    }
    assert_eq!(
        adjoints.len(),
        points.len(),
        "loss must return one adjoint per point"
    );
    let mut grad = vec![0.0; net.param_count()];
    let mut ws = net.workspace();
    for (p, adj) in points.iter().zip(&adjoints) {
        net.forward_ws(&mut ws, p.x, p.t);
        net.backprop_ws(&mut ws, adj, &mut grad);
    }
    Ok((value, grad))
}

/// Exact Jacobian of a residual vector with respect to the parameters of a
/// single-hidden-layer network.
///
/// Row `i` of the result is the parameter gradient of the `i`-th residual;
/// `residual` maps `(row index, jet at points[i])` to the residual value and
/// its jet cotangent. Deeper architectures are rejected.
pub fn residual_jacobian<R>(
    net: &DenseNet,
    points: &[Point],
    mut residual: R,
) -> Result<(Vec<f64>, DMatrix<f64>)>
where
    R: FnMut(usize, &NetJet) -> (f64, JetAdjoint),
{
    if !net.single_hidden_layer() {
        return Err(Error::UnsupportedArchitecture(format!(
            "residual Jacobian requires a single hidden layer, got widths {:?}",
            net.widths()
        )));
    }
    let n = net.param_count();
    let mut values = Vec::with_capacity(points.len());
    let mut jac = DMatrix::zeros(points.len(), n);
    let mut ws = net.workspace();
    let mut row_grad = vec![0.0; n];
    for (i, p) in points.iter().enumerate() {
        let want_t = net.input_dim() == 2;
        if want_t != p.t.is_some() {
            return Err(Error::InvalidInput(
                "point dimensionality does not match network input".into(),
            ));
        }
        let jet = net.forward_ws(&mut ws, p.x, p.t);
        let (val, adj) = residual(i, &jet);
        values.push(val);
        row_grad.iter_mut().for_each(|g| *g = 0.0);
        net.backprop_ws(&mut ws, &adj, &mut row_grad);
        for (c, &g) in row_grad.iter().enumerate() {
            jac[(i, c)] = g;
        }
    }
    Ok((values, jac))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(analytic: f64, numeric: f64, rel: f64, abs: f64) {
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        assert!(
            diff <= abs || diff <= rel * scale,
            "analytic={analytic} numeric={numeric} diff={diff}"
        );
    }

    /// φ = 2·tanh(x): the hand net used across the module docs.
    fn hand_net() -> DenseNet {
        let mut net = DenseNet::zeros(&[1, 1, 1], Activation::Tanh).unwrap();
        net.set_flat(&[1.0, 0.0, 2.0, 0.0]).unwrap();
        net
    }

    #[test]
    fn init_is_deterministic() {
        let a = DenseNet::init_random(&[1, 2, 1], Activation::Tanh, 7).unwrap();
        let b = DenseNet::init_random(&[1, 2, 1], Activation::Tanh, 7).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        let c = DenseNet::init_random(&[1, 2, 1], Activation::Tanh, 8).unwrap();
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn param_count_matches_shape_arithmetic() {
        let net = DenseNet::init_random(&[1, 2, 1], Activation::Tanh, 7).unwrap();
        // 2·1+2 first-layer params, 1·2+1 output params
        assert_eq!(net.param_count(), 7);
        assert_eq!(net.flatten().len(), 7);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        // both layers of [2,2,1] have fan-in 2, so every parameter must lie
        // in [-1/sqrt(2), 1/sqrt(2)]
        let bound = 1.0 / 2.0f64.sqrt();
        for seed in 0..10_000 {
            let net = DenseNet::init_random(&[2, 2, 1], Activation::Tanh, seed).unwrap();
            for p in net.flatten() {
                assert!(p.abs() <= bound, "seed {seed}: {p} out of [-{bound}, {bound}]");
            }
        }
    }

    #[test]
    fn invalid_widths_rejected() {
        assert!(matches!(
            DenseNet::zeros(&[], Activation::Tanh),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(matches!(
            DenseNet::zeros(&[1, 0, 1], Activation::Tanh),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(matches!(
            DenseNet::zeros(&[3, 2, 1], Activation::Tanh),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(matches!(
            DenseNet::zeros(&[1, 2, 2], Activation::Tanh),
            Err(Error::InvalidArchitecture(_))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = DenseNet::init_random(&[1, 2, 1], Activation::Tanh, 0).unwrap();
        assert!(matches!(
            net.evaluate(0.3, Some(0.1)),
            Err(Error::InvalidInput(_))
        ));
        let net2 = DenseNet::init_random(&[2, 2, 1], Activation::Tanh, 0).unwrap();
        assert!(matches!(net2.evaluate(0.3, None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_weights_give_constant_output() {
        let mut net = DenseNet::zeros(&[1, 3, 1], Activation::Sigmoid).unwrap();
        let mut params = net.flatten();
        *params.last_mut().unwrap() = 4.25; // output bias
        net.set_flat(&params).unwrap();
        let jet = net.evaluate(0.7, None).unwrap();
        assert_eq!(jet.value, 4.25);
        assert_eq!(jet.d_dx, 0.0);
        assert_eq!(jet.d2_dx2, 0.0);
        assert_eq!(jet.d_dt, 0.0);
    }

    #[test]
    fn hand_net_matches_closed_form() {
        let net = hand_net();
        let jet = net.evaluate(0.0, None).unwrap();
        assert_close(jet.value, 0.0, 0.0, 1e-15);
        assert_close(jet.d_dx, 2.0, 1e-14, 0.0);
        assert_close(jet.d2_dx2, 0.0, 0.0, 1e-15);
        // generic point: φ = 2 tanh x, φ' = 2(1-T²), φ'' = -4T(1-T²)
        let x = 0.8f64;
        let t = x.tanh();
        let jet = net.evaluate(x, None).unwrap();
        assert_close(jet.value, 2.0 * t, 1e-14, 0.0);
        assert_close(jet.d_dx, 2.0 * (1.0 - t * t), 1e-14, 0.0);
        assert_close(jet.d2_dx2, -4.0 * t * (1.0 - t * t), 1e-14, 0.0);
    }

    #[test]
    fn input_derivatives_match_finite_differences() {
        // the module invariant: 100 random nets across activations, depths
        // and both input dimensionalities
        let h = 1e-5;
        for seed in 0..100u64 {
            let act = Activation::ALL[(seed % 6) as usize];
            let (widths, has_t): (&[usize], bool) = match seed % 4 {
                0 => (&[1, 2, 1], false),
                1 => (&[1, 3, 3, 1], false),
                2 => (&[2, 2, 1], true),
                _ => (&[2, 4, 3, 1], true),
            };
            let net = DenseNet::init_random(widths, act, seed).unwrap();
            let x = -0.4 + 1.3 * ((seed as f64) * 0.37).fract();
            let t = if has_t { Some(0.35) } else { None };
            let jet = net.evaluate(x, t).unwrap();

            let f = |x: f64, t: Option<f64>| net.evaluate(x, t).unwrap().value;
            let fd_dx = (f(x + h, t) - f(x - h, t)) / (2.0 * h);
            // 4th-order 5-point stencil keeps the second-difference oracle
            // accurate enough for the 1e-6 relative contract
            let h2 = 2e-3;
            let fd_dxx = (-f(x + 2.0 * h2, t) + 16.0 * f(x + h2, t) - 30.0 * f(x, t)
                + 16.0 * f(x - h2, t)
                - f(x - 2.0 * h2, t))
                / (12.0 * h2 * h2);
            assert_close(jet.d_dx, fd_dx, 1e-6, 1e-9);
            assert_close(jet.d2_dx2, fd_dxx, 1e-6, 1e-9);
            if let Some(t0) = t {
                let fd_dt =
                    (f(x, Some(t0 + h)) - f(x, Some(t0 - h))) / (2.0 * h);
                assert_close(jet.d_dt, fd_dt, 1e-6, 1e-9);
            } else {
                assert_eq!(jet.d_dt, 0.0);
            }
        }
    }

    #[test]
    fn flatten_round_trips() {
        for seed in 0..20u64 {
            let net = DenseNet::init_random(&[2, 3, 2, 1], Activation::Arctan, seed).unwrap();
            let flat = net.flatten();
            let mut copy = DenseNet::zeros(&[2, 3, 2, 1], Activation::Arctan).unwrap();
            copy.set_flat(&flat).unwrap();
            assert_eq!(copy.flatten(), flat);
            let jet_a = net.evaluate(0.3, Some(0.6)).unwrap();
            let jet_b = copy.evaluate(0.3, Some(0.6)).unwrap();
            assert_eq!(jet_a, jet_b);
        }
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let net = DenseNet::init_random(&[1, 4, 1], Activation::Tanh, 3).unwrap();
        let points = [Point::x(0.1), Point::x(0.9)];
        let (v, g) = loss_gradient(&net, &points, |jets| {
            (0.0, vec![JetAdjoint::default(); jets.len()])
        })
        .unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hand_net_squared_value_gradient_is_symbolic() {
        // loss = φ(x0)² with φ = w3 tanh(w1 x + b1) + b3
        // ∂/∂w1 = 2φ w3 (1-T²) x0, ∂/∂b1 = 2φ w3 (1-T²),
        // ∂/∂w3 = 2φ T, ∂/∂b3 = 2φ
        let net = hand_net();
        let x0 = 1.0;
        let points = [Point::x(x0)];
        let (v, g) = loss_gradient(&net, &points, |jets| {
            let phi = jets[0].value;
            (phi * phi, vec![JetAdjoint::value(2.0 * phi)])
        })
        .unwrap();
        let tanh = x0.tanh();
        let phi = 2.0 * tanh;
        assert_close(v, phi * phi, 1e-14, 0.0);
        let sech2 = 1.0 - tanh * tanh;
        assert_close(g[0], 2.0 * phi * 2.0 * sech2 * x0, 1e-12, 0.0);
        assert_close(g[1], 2.0 * phi * 2.0 * sech2, 1e-12, 0.0);
        assert_close(g[2], 2.0 * phi * tanh, 1e-12, 0.0);
        assert_close(g[3], 2.0 * phi, 1e-12, 0.0);
    }

    /// Central differences of an arbitrary loss over the flat parameters.
    fn fd_param_gradient<F>(net: &DenseNet, f: F) -> Vec<f64>
    where
        F: Fn(&DenseNet) -> f64,
    {
        let h = 1e-6;
        let base = net.flatten();
        let mut grad = vec![0.0; base.len()];
        let mut probe = net.clone();
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + h;
            probe.set_flat(&p).unwrap();
            let up = f(&probe);
            p[k] = base[k] - h;
            probe.set_flat(&p).unwrap();
            let dn = f(&probe);
            grad[k] = (up - dn) / (2.0 * h);
        }
        grad
    }

    #[test]
    fn composite_jet_loss_gradient_matches_finite_differences() {
        // exercises all four adjoint channels: value, dx, dxx and dt
        for seed in 0..30u64 {
            let act = Activation::ALL[(seed % 6) as usize];
            let net = DenseNet::init_random(&[2, 3, 2, 1], act, seed).unwrap();
            let points = [Point::xt(0.2, 0.1), Point::xt(0.7, 0.8)];
            let loss_of = |n: &DenseNet| {
                points
                    .iter()
                    .map(|p| {
                        let j = n.evaluate(p.x, p.t).unwrap();
                        0.5 * (0.1 * j.d2_dx2 - j.d_dx + j.d_dt + j.value).powi(2)
                    })
                    .sum::<f64>()
            };
            let (_, g) = loss_gradient(&net, &points, |jets| {
                let mut adj = Vec::new();
                let mut total = 0.0;
                for j in jets {
                    let r = 0.1 * j.d2_dx2 - j.d_dx + j.d_dt + j.value;
                    total += 0.5 * r * r;
                    adj.push(JetAdjoint {
                        value: r,
                        d_dx: -r,
                        d2_dx2: 0.1 * r,
                        d_dt: r,
                    });
                }
                (total, adj)
            })
            .unwrap();
            let fd = fd_param_gradient(&net, loss_of);
            for (a, b) in g.iter().zip(&fd) {
                assert_close(*a, *b, 1e-6, 1e-9);
            }
        }
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        let net = hand_net();
        let r = loss_gradient(&net, &[Point::x(0.0)], |jets| {
            (f64::NAN, vec![JetAdjoint::default(); jets.len()])
        });
        assert!(matches!(r, Err(Error::DivergedEvaluation { .. })));
    }

    #[test]
    fn constant_residual_gives_zero_jacobian() {
        let net = DenseNet::init_random(&[1, 3, 1], Activation::Tanh, 11).unwrap();
        let points = [Point::x(0.2), Point::x(0.5), Point::x(0.8)];
        let (vals, jac) =
            residual_jacobian(&net, &points, |_, _| (3.5, JetAdjoint::default())).unwrap();
        assert!(vals.iter().all(|&v| v == 3.5));
        assert!(jac.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_jacobian_equals_value_gradient() {
        let net = hand_net();
        let points = [Point::x(0.6)];
        let (_, jac) =
            residual_jacobian(&net, &points, |_, jet| (jet.value, JetAdjoint::value(1.0)))
                .unwrap();
        let (_, grad) = loss_gradient(&net, &points, |jets| {
            (jets[0].value, vec![JetAdjoint::value(1.0)])
        })
        .unwrap();
        for (c, &g) in grad.iter().enumerate() {
            assert_close(jac[(0, c)], g, 1e-14, 1e-15);
        }
    }

    #[test]
    fn residual_jacobian_matches_finite_differences() {
        let net = DenseNet::init_random(&[1, 4, 1], Activation::Tanh, 5).unwrap();
        let points = [Point::x(0.25), Point::x(0.5), Point::x(0.75)];
        let eps = 0.3;
        let (_, jac) = residual_jacobian(&net, &points, |_, jet| {
            (
                eps * jet.d2_dx2 - jet.d_dx,
                JetAdjoint {
                    value: 0.0,
                    d_dx: -1.0,
                    d2_dx2: eps,
                    d_dt: 0.0,
                },
            )
        })
        .unwrap();
        for (i, p) in points.iter().enumerate() {
            let fd = fd_param_gradient(&net, |n| {
                let j = n.evaluate(p.x, p.t).unwrap();
                eps * j.d2_dx2 - j.d_dx
            });
            for (c, &g) in fd.iter().enumerate() {
                assert_close(jac[(i, c)], g, 1e-6, 1e-9);
            }
        }
    }

    #[test]
    fn residual_jacobian_rejects_deep_networks() {
        let net = DenseNet::init_random(&[1, 3, 3, 1], Activation::Tanh, 0).unwrap();
        let r = residual_jacobian(&net, &[Point::x(0.5)], |_, jet| {
            (jet.value, JetAdjoint::value(1.0))
        });
        assert!(matches!(r, Err(Error::UnsupportedArchitecture(_))));
    }
}
