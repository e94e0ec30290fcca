//! First-order update rules. Slot buffers are kept in `f64` regardless of
//! the parameter precision.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Asgd,
    Adadelta,
    Adagrad,
    Adam,
    Adamax,
    AdamW,
    RmsProp,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 8] = [
        Self::Sgd,
        Self::Asgd,
        Self::Adadelta,
        Self::Adagrad,
        Self::Adam,
        Self::Adamax,
        Self::AdamW,
        Self::RmsProp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Asgd => "asgd",
            Self::Adadelta => "adadelta",
            Self::Adagrad => "adagrad",
            Self::Adam => "adam",
            Self::Adamax => "adamax",
            Self::AdamW => "adamw",
            Self::RmsProp => "rmsprop",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::config(format!("unknown optimizer {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Momentum SGD: `b ← μ·b + g`, `w ← w − lr·b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdParams {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

/// Averaged SGD with polynomially decaying step `η` and averaging from
/// step `t0` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsgdParams {
    pub lambd: f64,
    pub alpha: f64,
    pub t0: f64,
    pub weight_decay: f64,
}

impl Default for AsgdParams {
    fn default() -> Self {
        Self {
            lambd: 1e-4,
            alpha: 0.75,
            t0: 1e6,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdadeltaParams {
    pub rho: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdadeltaParams {
    fn default() -> Self {
        Self {
            rho: 0.9,
            eps: 1e-6,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdagradParams {
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub initial_accumulator_value: f64,
    pub eps: f64,
}

impl Default for AdagradParams {
    fn default() -> Self {
        Self {
            lr_decay: 0.0,
            weight_decay: 0.0,
            initial_accumulator_value: 0.0,
            eps: 1e-10,
        }
    }
}

/// Shared by Adam, Adamax and AdamW. For AdamW `weight_decay` is the
/// decoupled decay; for the others it is added to the gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmsPropParams {
    pub alpha: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub centered: bool,
}

impl Default for RmsPropParams {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
            momentum: 0.0,
            centered: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd(SgdParams),
    Asgd(AsgdParams),
    Adadelta(AdadeltaParams),
    Adagrad(AdagradParams),
    Adam(AdamParams),
    Adamax(AdamParams),
    AdamW(AdamParams),
    RmsProp(RmsPropParams),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::Sgd(SgdParams::default())
    }
}

impl OptimizerConfig {
    pub fn defaults(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd(SgdParams::default()),
            OptimizerKind::Asgd => Self::Asgd(AsgdParams::default()),
            OptimizerKind::Adadelta => Self::Adadelta(AdadeltaParams::default()),
            OptimizerKind::Adagrad => Self::Adagrad(AdagradParams::default()),
            OptimizerKind::Adam => Self::Adam(AdamParams::default()),
            OptimizerKind::Adamax => Self::Adamax(AdamParams::default()),
            OptimizerKind::AdamW => Self::AdamW(AdamParams {
                weight_decay: 0.01,
                ..AdamParams::default()
            }),
            OptimizerKind::RmsProp => Self::RmsProp(RmsPropParams::default()),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Self::Sgd(_) => OptimizerKind::Sgd,
            Self::Asgd(_) => OptimizerKind::Asgd,
            Self::Adadelta(_) => OptimizerKind::Adadelta,
            Self::Adagrad(_) => OptimizerKind::Adagrad,
            Self::Adam(_) => OptimizerKind::Adam,
            Self::Adamax(_) => OptimizerKind::Adamax,
            Self::AdamW(_) => OptimizerKind::AdamW,
            Self::RmsProp(_) => OptimizerKind::RmsProp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind();
        let check = |name: &str, v: f64, ok: bool| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{kind}: {name} = {v} is out of range")))
            }
        };
        let unit = |name: &str, v: f64| check(name, v, (0.0..1.0).contains(&v));
        let non_neg = |name: &str, v: f64| check(name, v, v >= 0.0);
        match self {
            Self::Sgd(p) => {
                unit("momentum", p.momentum)?;
                non_neg("weight_decay", p.weight_decay)
            }
            Self::Asgd(p) => {
                non_neg("lambd", p.lambd)?;
                non_neg("alpha", p.alpha)?;
                non_neg("t0", p.t0)?;
                non_neg("weight_decay", p.weight_decay)
            }
            Self::Adadelta(p) => {
                check("rho", p.rho, (0.0..=1.0).contains(&p.rho))?;
                non_neg("eps", p.eps)?;
                non_neg("weight_decay", p.weight_decay)
            }
            Self::Adagrad(p) => {
                non_neg("lr_decay", p.lr_decay)?;
                non_neg("initial_accumulator_value", p.initial_accumulator_value)?;
                non_neg("eps", p.eps)?;
                non_neg("weight_decay", p.weight_decay)
            }
            Self::Adam(p) | Self::Adamax(p) | Self::AdamW(p) => {
                unit("beta1", p.betas.0)?;
                unit("beta2", p.betas.1)?;
                non_neg("eps", p.eps)?;
                non_neg("weight_decay", p.weight_decay)
            }
            Self::RmsProp(p) => {
                non_neg("alpha", p.alpha)?;
                non_neg("eps", p.eps)?;
                unit("momentum", p.momentum)?;
                non_neg("weight_decay", p.weight_decay)
            }
        }
    }
}

/// Optimizer state. Slot buffers are created on the first step with the
/// lengths of the parameters they shadow.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    slots: Vec<[Vec<f64>; 3]>,
    shapes: Vec<Vec<usize>>,
    eta: f64,
    mu: f64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            steps: 0,
            slots: Vec::new(),
            shapes: Vec::new(),
            eta: f64::NAN,
            mu: 1.0,
        })
    }

    pub fn with_defaults(kind: OptimizerKind) -> Self {
        Self::new(OptimizerConfig::defaults(kind)).expect("defaults are in range")
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn kind(&self) -> OptimizerKind {
        self.config.kind()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Shapes of the parameters the slots were created for.
    pub fn slot_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// ASGD running average of the weights, `None` for other kinds or before
    /// the first step.
    pub fn averaged_params<T: Scalar>(&self) -> Option<Vec<Tensor<T>>> {
        if self.kind() != OptimizerKind::Asgd || self.steps == 0 {
            return None;
        }
        let out = self
            .slots
            .iter()
            .zip(&self.shapes)
            .map(|(s, shape)| {
                Tensor::new(shape, s[0].iter().map(|&v| T::from_f64_lossy(v)).collect())
                    .expect("slot length matches shape")
            })
            .collect();
        Some(out)
    }

    fn ensure_slots<T: Scalar>(&mut self, params: &[&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "parameter {i} has shape {:?} but its gradient has {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        if self.steps == 0 {
            let init = match &self.config {
                OptimizerConfig::Adagrad(p) => p.initial_accumulator_value,
                _ => 0.0,
            };
            self.shapes = params.iter().map(|p| p.shape().to_vec()).collect();
            self.slots = params
                .iter()
                .map(|p| {
                    let n = p.len();
                    [vec![init; n], vec![0.0; n], vec![0.0; n]]
                })
                .collect();
        } else if params.len() != self.shapes.len()
            || params.iter().zip(&self.shapes).any(|(p, s)| p.shape() != s.as_slice())
        {
            return Err(Error::shape("parameter list changed between optimizer steps"));
        }
        Ok(())
    }

    /// Applies one update in place and increments the step counter.
    pub fn step<T: Scalar>(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        self.ensure_slots(params, grads)?;
        if self.steps == 0 {
            self.eta = lr;
        }
        self.steps += 1;
        let t = self.steps as f64;
        let (eta, mu) = (self.eta, self.mu);
        let config = self.config.clone();

        for ((param, grad), slot) in params.iter_mut().zip(grads).zip(self.slots.iter_mut()) {
            let [s0, s1, s2] = slot;
            let w = param.data_mut();
            let g = grad.data();
            for i in 0..w.len() {
                let wi = w[i].as_f64();
                let gi = g[i].as_f64();
                let next = match &config {
                    OptimizerConfig::Sgd(p) => {
                        let gi = gi + p.weight_decay * wi;
                        if p.momentum > 0.0 {
                            s0[i] = p.momentum * s0[i] + gi;
                            wi - lr * s0[i]
                        } else {
                            wi - lr * gi
                        }
                    }
                    OptimizerConfig::Asgd(p) => {
                        let gi = gi + p.weight_decay * wi;
                        let wn = wi * (1.0 - p.lambd * eta) - eta * gi;
                        s0[i] = if mu != 1.0 { s0[i] + (wn - s0[i]) * mu } else { wn };
                        wn
                    }
                    OptimizerConfig::Adadelta(p) => {
                        let gi = gi + p.weight_decay * wi;
                        s0[i] = p.rho * s0[i] + (1.0 - p.rho) * gi * gi;
                        let delta = (s1[i] + p.eps).sqrt() / (s0[i] + p.eps).sqrt() * gi;
                        s1[i] = p.rho * s1[i] + (1.0 - p.rho) * delta * delta;
                        wi - lr * delta
                    }
                    OptimizerConfig::Adagrad(p) => {
                        let gi = gi + p.weight_decay * wi;
                        let clr = lr / (1.0 + (t - 1.0) * p.lr_decay);
                        s0[i] += gi * gi;
                        wi - clr * gi / (s0[i].sqrt() + p.eps)
                    }
                    OptimizerConfig::Adam(p) | OptimizerConfig::AdamW(p) => {
                        let decoupled = matches!(config, OptimizerConfig::AdamW(_));
                        let (wi, gi) = if decoupled {
                            (wi * (1.0 - lr * p.weight_decay), gi)
                        } else {
                            (wi, gi + p.weight_decay * wi)
                        };
                        let (b1, b2) = p.betas;
                        s0[i] = b1 * s0[i] + (1.0 - b1) * gi;
                        s1[i] = b2 * s1[i] + (1.0 - b2) * gi * gi;
                        let bc1 = 1.0 - b1.powf(t);
                        let bc2 = 1.0 - b2.powf(t);
                        let denom = s1[i].sqrt() / bc2.sqrt() + p.eps;
                        wi - lr / bc1 * s0[i] / denom
                    }
                    OptimizerConfig::Adamax(p) => {
                        let gi = gi + p.weight_decay * wi;
                        let (b1, b2) = p.betas;
                        s0[i] = b1 * s0[i] + (1.0 - b1) * gi;
                        s1[i] = (b2 * s1[i]).max(gi.abs() + p.eps);
                        wi - lr / (1.0 - b1.powf(t)) * s0[i] / s1[i]
                    }
                    OptimizerConfig::RmsProp(p) => {
                        let gi = gi + p.weight_decay * wi;
                        s0[i] = p.alpha * s0[i] + (1.0 - p.alpha) * gi * gi;
                        let avg = if p.centered {
                            s2[i] = p.alpha * s2[i] + (1.0 - p.alpha) * gi;
                            (s0[i] - s2[i] * s2[i]).sqrt() + p.eps
                        } else {
                            s0[i].sqrt() + p.eps
                        };
                        if p.momentum > 0.0 {
                            s1[i] = p.momentum * s1[i] + gi / avg;
                            wi - lr * s1[i]
                        } else {
                            wi - lr * gi / avg
                        }
                    }
                };
                w[i] = T::from_f64_lossy(next);
            }
        }

        if let OptimizerConfig::Asgd(p) = &self.config {
            self.eta = lr / (1.0 + p.lambd * lr * t).powf(p.alpha);
            self.mu = 1.0 / (t - p.t0).max(1.0);
        }
        Ok(())
    }
}
