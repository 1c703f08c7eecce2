//! Hidden-layer activation functions with closed-form derivatives.
//!
//! Every tag provides the value and its first three derivatives: the forward
//! pass propagates second-order input jets, and backpropagating through the
//! second-derivative channel needs one order more.

use std::fmt;

/// Activation applied to every hidden layer of a [`crate::net::DenseNet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softplus,
    LogSigmoid,
    Arctan,
    /// Plain exponential. Admitted because the steady problem's exact
    /// solution is itself exponential; excluded from default sweeps since it
    /// does not generalise.
    Exponent,
}

/// Numerically stable logistic function.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Activation {
    /// All tags, in sweep order.
    pub const ALL: [Activation; 6] = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softplus,
        Activation::LogSigmoid,
        Activation::Arctan,
        Activation::Exponent,
    ];

    /// Function value at `x`.
    pub fn eval(self, x: f64) -> f64 {
        self.derivs(x)[0]
    }

    /// Value and first three derivatives: `[f, f', f'', f''']`.
    ///
    /// All six tags are smooth on the whole real line, so every entry is
    /// finite for finite `x`.
    pub fn derivs(self, x: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let f = x.tanh();
                let f1 = 1.0 - f * f;
                let f2 = -2.0 * f * f1;
                let f3 = -2.0 * (f1 * f1 + f * f2);
                [f, f1, f2, f3]
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                let f1 = s * (1.0 - s);
                let f2 = f1 * (1.0 - 2.0 * s);
                let f3 = f2 * (1.0 - 2.0 * s) - 2.0 * f1 * f1;
                [s, f1, f2, f3]
            }
            Activation::Softplus => {
                let s = sigmoid(x);
                let f1 = s;
                let f2 = s * (1.0 - s);
                let f3 = f2 * (1.0 - 2.0 * s);
                [softplus(x), f1, f2, f3]
            }
            Activation::LogSigmoid => {
                // ln(sigmoid(x)) = -softplus(-x)
                let s = sigmoid(x);
                let f1 = 1.0 - s;
                let f2 = -s * (1.0 - s);
                let f3 = f2 * (1.0 - 2.0 * s);
                [-softplus(-x), f1, f2, f3]
            }
            Activation::Arctan => {
                let d = 1.0 / (1.0 + x * x);
                let f1 = d;
                let f2 = -2.0 * x * d * d;
                let f3 = (6.0 * x * x - 2.0) * d * d * d;
                [x.atan(), f1, f2, f3]
            }
            Activation::Exponent => {
                let e = x.exp();
                [e, e, e, e]
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
            Activation::LogSigmoid => "log-sigmoid",
            Activation::Arctan => "arctan",
            Activation::Exponent => "exponent",
        };
        f.write_str(name)
    }
}
