//! Instantiated network: parameters, forward/backward over the whole stack.

use crate::error::{Error, Result};
use crate::init::{kaiming_bound, kaiming_uniform_init, uniform_init, HEAD_GAIN};
use crate::model::spec::{ActShape, LayerSpec, ModelSpec};
use crate::nn::{
    self, BatchNormCache, BatchNormState, DropoutMask, MaxPoolCache, Mode,
};
use crate::rng::{purpose, Rng};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
enum Op<T: Scalar> {
    Conv { name: String, weight: Tensor<T>, bias: Tensor<T> },
    BatchNorm { name: String, state: BatchNormState<T> },
    Relu,
    MaxPool,
    AdaptiveAvgPool { out: (usize, usize) },
    Dropout { p: f64 },
    Flatten,
    Dense { name: String, weight: Tensor<T>, bias: Tensor<T> },
}

#[derive(Debug)]
enum Cache<T: Scalar> {
    Conv(Tensor<T>),
    BatchNorm(BatchNormCache<T>),
    Relu(Tensor<T>),
    MaxPool(MaxPoolCache),
    AdaptiveAvgPool(Vec<usize>),
    Dropout(Option<DropoutMask<T>>),
    Flatten(Vec<usize>),
    Dense(Tensor<T>),
}

impl<T: Scalar> Op<T> {
    fn kind(&self) -> &'static str {
        match self {
            Op::Conv { .. } => "conv2d",
            Op::BatchNorm { .. } => "batchnorm2d",
            Op::Relu => "relu",
            Op::MaxPool => "maxpool2d",
            Op::AdaptiveAvgPool { .. } => "adaptive_avgpool2d",
            Op::Dropout { .. } => "dropout",
            Op::Flatten => "flatten",
            Op::Dense { .. } => "dense",
        }
    }

    fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Op::Conv { weight, bias, .. } => nn::conv2d(x, weight, bias),
            Op::BatchNorm { state, .. } => nn::batchnorm2d_eval(x, state),
            Op::Relu => Ok(nn::relu(x)),
            Op::MaxPool => Ok(nn::maxpool2d(x)?.0),
            Op::AdaptiveAvgPool { out } => nn::adaptive_avgpool2d(x, *out),
            Op::Dropout { .. } => Ok(x.clone()),
            Op::Flatten => flatten(x.clone()),
            Op::Dense { weight, bias, .. } => nn::dense(x, weight, bias),
        }
    }

    fn train(&mut self, x: Tensor<T>, rng: &mut Rng) -> Result<(Tensor<T>, Cache<T>)> {
        Ok(match self {
            Op::Conv { weight, bias, .. } => (nn::conv2d(&x, weight, bias)?, Cache::Conv(x)),
            Op::BatchNorm { state, .. } => {
                let (y, c) = nn::batchnorm2d_train(&x, state)?;
                (y, Cache::BatchNorm(c))
            }
            Op::Relu => (nn::relu(&x), Cache::Relu(x)),
            Op::MaxPool => {
                let (y, c) = nn::maxpool2d(&x)?;
                (y, Cache::MaxPool(c))
            }
            Op::AdaptiveAvgPool { out } => (
                nn::adaptive_avgpool2d(&x, *out)?,
                Cache::AdaptiveAvgPool(x.shape().to_vec()),
            ),
            Op::Dropout { p } => {
                let (y, mask) = nn::dropout(&x, *p, Mode::Train, rng)?;
                (y, Cache::Dropout(mask))
            }
            Op::Flatten => {
                let shape = x.shape().to_vec();
                (flatten(x)?, Cache::Flatten(shape))
            }
            Op::Dense { weight, bias, .. } => (nn::dense(&x, weight, bias)?, Cache::Dense(x)),
        })
    }

    /// Returns the input gradient and this op's parameter gradients.
    fn backward(&self, cache: Cache<T>, dy: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        Ok(match (self, cache) {
            (Op::Conv { weight, .. }, Cache::Conv(x)) => {
                let g = nn::conv2d_backward(&x, weight, dy)?;
                (g.dx, vec![g.dw, g.db])
            }
            (Op::BatchNorm { state, .. }, Cache::BatchNorm(c)) => {
                let g = nn::batchnorm2d_backward(&c, &state.gamma, dy)?;
                (g.dx, vec![g.dgamma, g.dbeta])
            }
            (Op::Relu, Cache::Relu(x)) => (nn::relu_backward(&x, dy)?, vec![]),
            (Op::MaxPool, Cache::MaxPool(c)) => (nn::maxpool2d_backward(&c, dy)?, vec![]),
            (Op::AdaptiveAvgPool { out }, Cache::AdaptiveAvgPool(shape)) => {
                (nn::adaptive_avgpool2d_backward(&shape, *out, dy)?, vec![])
            }
            (Op::Dropout { .. }, Cache::Dropout(mask)) => {
                (nn::dropout_backward(mask.as_ref(), dy)?, vec![])
            }
            (Op::Flatten, Cache::Flatten(shape)) => (dy.clone().reshape(&shape)?, vec![]),
            (Op::Dense { weight, .. }, Cache::Dense(x)) => {
                let g = nn::dense_backward(&x, weight, dy)?;
                (g.dx, vec![g.dw, g.db])
            }
            (op, _) => {
                return Err(Error::State(format!(
                    "cache does not belong to {} layer",
                    op.kind()
                )))
            }
        })
    }
}

fn flatten<T: Scalar>(x: Tensor<T>) -> Result<Tensor<T>> {
    let n = x.shape()[0];
    let f = x.len() / n;
    x.reshape(&[n, f])
}

/// A [`ModelSpec`] with parameters, running statistics and (after a
/// train-mode forward) the caches needed for backward.
#[derive(Debug)]
pub struct ModelGraph<T: Scalar = f32> {
    spec: ModelSpec,
    ops: Vec<Op<T>>,
    caches: Option<Vec<Cache<T>>>,
}

impl<T: Scalar> Clone for ModelGraph<T> {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            ops: self.ops.clone(),
            caches: None,
        }
    }
}

impl<T: Scalar> ModelGraph<T> {
    /// Builds the graph with Kaiming-uniform weights (the final dense layer
    /// scaled by [`HEAD_GAIN`]), zero biases and identity batch norm. Each parameter draws from its own child stream of
    /// `seed`.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let trace = spec.trace()?;
        let root = Rng::new(seed);
        let mut param_i = 0u64;
        let mut next_rng = || {
            param_i += 1;
            root.child(&[purpose::INIT, param_i])
        };
        let dense_total = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Dense { .. }))
            .count();
        let mut ops = Vec::new();
        let [c0, h0, w0] = spec.input;
        let mut prev = ActShape::Map { c: c0, h: h0, w: w0 };
        let (mut conv_i, mut fc_i) = (0usize, 0usize);
        for (layer, &shape) in spec.layers.iter().zip(&trace) {
            match *layer {
                LayerSpec::Conv { out_channels, batchnorm, dropout } => {
                    conv_i += 1;
                    let ActShape::Map { c: cin, .. } = prev else {
                        unreachable!("validated by trace")
                    };
                    let name = format!("conv{conv_i}");
                    let weight = kaiming_uniform_init(
                        &[out_channels, cin, nn::KERNEL, nn::KERNEL],
                        cin * nn::KERNEL * nn::KERNEL,
                        &mut next_rng(),
                    )?;
                    next_rng();
                    ops.push(Op::Conv {
                        name: name.clone(),
                        weight,
                        bias: Tensor::zeros(&[out_channels])?,
                    });
                    if batchnorm {
                        ops.push(Op::BatchNorm {
                            name: format!("{name}.bn"),
                            state: BatchNormState::new(out_channels)?,
                        });
                    }
                    ops.push(Op::Relu);
                    if let Some(p) = dropout {
                        ops.push(Op::Dropout { p });
                    }
                }
                LayerSpec::Maxpool => ops.push(Op::MaxPool),
                LayerSpec::AdaptiveAvgpool { out } => {
                    ops.push(Op::AdaptiveAvgPool { out: (out[0], out[1]) })
                }
                LayerSpec::Dropout { p } => ops.push(Op::Dropout { p }),
                LayerSpec::Dense { out_features } => {
                    fc_i += 1;
                    let fan_in = match prev {
                        ActShape::Map { c, h, w } => {
                            ops.push(Op::Flatten);
                            c * h * w
                        }
                        ActShape::Flat(f) => f,
                    };
                    let gain = if fc_i == dense_total { HEAD_GAIN } else { 1.0 };
                    let weight = uniform_init(
                        &[fan_in, out_features],
                        gain * kaiming_bound(fan_in)?,
                        &mut next_rng(),
                    )?;
                    next_rng();
                    ops.push(Op::Dense {
                        name: format!("fc{fc_i}"),
                        weight,
                        bias: Tensor::zeros(&[out_features])?,
                    });
                    if fc_i < dense_total {
                        ops.push(Op::Relu);
                    }
                }
            }
            prev = shape;
        }
        Ok(Self {
            spec: spec.clone(),
            ops,
            caches: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Eval mode: running batch-norm statistics, dropout off, no caches.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut ops = self.ops.iter();
        let first = ops.next().expect("graph has at least one op");
        let mut a = first.eval(x)?;
        for op in ops {
            a = op.eval(&a)?;
        }
        Ok(a)
    }

    /// Train mode: batch statistics, dropout drawn from child streams of
    /// `rng` keyed by op position, caches kept for [`Self::backward`].
    pub fn forward_train(&mut self, x: &Tensor<T>, rng: &Rng) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.caches = None;
        let mut caches = Vec::with_capacity(self.ops.len());
        let mut a = x.clone();
        for (i, op) in self.ops.iter_mut().enumerate() {
            let mut op_rng = rng.child(&[purpose::DROPOUT, i as u64]);
            let (y, cache) = op.train(a, &mut op_rng)?;
            caches.push(cache);
            a = y;
        }
        self.caches = Some(caches);
        Ok(a)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &Rng) -> Result<Tensor<T>> {
        match mode {
            Mode::Train => self.forward_train(x, rng),
            Mode::Eval => self.forward_eval(x),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [_, c, _, _] = x.dims4()?;
        if c != self.spec.input[0] {
            return Err(Error::shape(format!(
                "model expects {} input channels, got {c}",
                self.spec.input[0]
            )));
        }
        Ok(())
    }

    /// Gradients of every trainable parameter, aligned with
    /// [`Self::param_names`]. Consumes the caches of the preceding
    /// train-mode forward.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let caches = self.caches.take().ok_or_else(|| {
            Error::State("backward called without a preceding train-mode forward".into())
        })?;
        let mut per_op: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.ops.len());
        let mut grad = dlogits.clone();
        for (op, cache) in self.ops.iter().zip(caches).rev() {
            let (dx, pgrads) = op.backward(cache, &grad)?;
            per_op.push(pgrads);
            grad = dx;
        }
        Ok(per_op.into_iter().rev().flatten().collect())
    }

    pub fn has_cache(&self) -> bool {
        self.caches.is_some()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.named_params().into_iter().map(|(n, _)| n).collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for op in &self.ops {
            match op {
                Op::Conv { name, weight, bias } | Op::Dense { name, weight, bias } => {
                    out.push((format!("{name}.weight"), weight));
                    out.push((format!("{name}.bias"), bias));
                }
                Op::BatchNorm { name, state } => {
                    out.push((format!("{name}.gamma"), &state.gamma));
                    out.push((format!("{name}.beta"), &state.beta));
                }
                _ => {}
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for op in &mut self.ops {
            match op {
                Op::Conv { weight, bias, .. } | Op::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                Op::BatchNorm { state, .. } => {
                    out.push(&mut state.gamma);
                    out.push(&mut state.beta);
                }
                _ => {}
            }
        }
        out
    }

    /// Parameters followed by batch-norm running statistics, in a stable
    /// order. This is the checkpoint payload.
    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.named_params();
        for op in &self.ops {
            if let Op::BatchNorm { name, state } = op {
                out.push((format!("{name}.running_mean"), &state.running_mean));
                out.push((format!("{name}.running_var"), &state.running_var));
            }
        }
        out
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for op in &mut self.ops {
            match op {
                Op::Conv { name, weight, bias } | Op::Dense { name, weight, bias } => {
                    params.push((format!("{name}.weight"), weight));
                    params.push((format!("{name}.bias"), bias));
                }
                Op::BatchNorm { name, state } => {
                    params.push((format!("{name}.gamma"), &mut state.gamma));
                    params.push((format!("{name}.beta"), &mut state.beta));
                    buffers.push((format!("{name}.running_mean"), &mut state.running_mean));
                    buffers.push((format!("{name}.running_var"), &mut state.running_var));
                }
                _ => {}
            }
        }
        params.extend(buffers);
        params
    }

    pub fn count_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Primitive op kinds in execution order (`conv2d`, `relu`, …).
    pub fn op_kinds(&self) -> Vec<&'static str> {
        self.ops.iter().map(Op::kind).collect()
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> ModelGraph<U> {
        let ops = self
            .ops
            .iter()
            .map(|op| match op {
                Op::Conv { name, weight, bias } => Op::Conv {
                    name: name.clone(),
                    weight: weight.cast(),
                    bias: bias.cast(),
                },
                Op::Dense { name, weight, bias } => Op::Dense {
                    name: name.clone(),
                    weight: weight.cast(),
                    bias: bias.cast(),
                },
                Op::BatchNorm { name, state } => Op::BatchNorm {
                    name: name.clone(),
                    state: BatchNormState {
                        gamma: state.gamma.cast(),
                        beta: state.beta.cast(),
                        running_mean: state.running_mean.cast(),
                        running_var: state.running_var.cast(),
                        momentum: state.momentum,
                        eps: state.eps,
                    },
                },
                Op::Relu => Op::Relu,
                Op::MaxPool => Op::MaxPool,
                Op::AdaptiveAvgPool { out } => Op::AdaptiveAvgPool { out: *out },
                Op::Dropout { p } => Op::Dropout { p: *p },
                Op::Flatten => Op::Flatten,
            })
            .collect();
        ModelGraph {
            spec: self.spec.clone(),
            ops,
            caches: None,
        }
    }
}
