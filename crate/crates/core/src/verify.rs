//! Finite-difference verification suite: every layer kernel plus a whole
//! network, in f64, over several seeds.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{ModelGraph, ModelSpec};
use crate::nn::{self, gradcheck::project, grad_check, Mode};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-5;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Scale applied to an analytic gradient when a fault is injected.
const FAULT_SCALE: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Check {
    Conv2d,
    BatchNorm2d,
    Relu,
    MaxPool2d,
    AdaptiveAvgPool2d,
    Dropout,
    Dense,
    SoftmaxCrossEntropy,
    Network,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Self::Conv2d,
        Self::BatchNorm2d,
        Self::Relu,
        Self::MaxPool2d,
        Self::AdaptiveAvgPool2d,
        Self::Dropout,
        Self::Dense,
        Self::SoftmaxCrossEntropy,
        Self::Network,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Conv2d => "conv2d",
            Self::BatchNorm2d => "batchnorm2d",
            Self::Relu => "relu",
            Self::MaxPool2d => "maxpool2d",
            Self::AdaptiveAvgPool2d => "adaptive_avgpool2d",
            Self::Dropout => "dropout",
            Self::Dense => "dense",
            Self::SoftmaxCrossEntropy => "softmax_cross_entropy",
            Self::Network => "network",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub check: Check,
    /// Worst relative error over all seeds and gradient slots.
    pub worst: f64,
    pub seeds: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst <= TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> Vec<Check> {
        self.results.iter().filter(|r| !r.passed()).map(|r| r.check).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<24}{:>14}  {}\n", "layer", "worst rel err", "status");
        for r in &self.results {
            let status = if r.passed() { "ok" } else { "FAIL" };
            s += &format!("{:<24}{:>14.3e}  {status}\n", r.check.name(), r.worst);
        }
        s
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform_in(lo, hi)).collect()).expect("valid shape")
}

/// Magnitudes in `[0.1, 1]` with random signs: no value near the ReLU kink.
fn away_from_zero(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let mut t = uniform(shape, 0.1, 1.0, rng);
    for v in t.data_mut() {
        if rng.bernoulli(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Distinct values spaced 0.05 apart in random order: no near-ties inside
/// any pooling window.
fn well_separated(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    rng.shuffle(&mut vals);
    Tensor::new(shape, vals).expect("valid shape")
}

fn corrupt(t: Tensor<f64>, on: bool) -> Tensor<f64> {
    if on {
        t.map(|v| v * FAULT_SCALE)
    } else {
        t
    }
}

/// Worst relative error of one check for one seed. With `fault` set the
/// analytic gradients are deliberately scaled so the check must fail.
pub fn run_check(check: Check, spec: &ModelSpec, seed: u64, fault: bool) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let h = STEP;
    match check {
        Check::Conv2d => {
            let x = uniform(&[2, 2, 5, 5], -1.0, 1.0, &mut rng);
            let w = uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
            let b = uniform(&[3], -1.0, 1.0, &mut rng);
            let r = uniform(&[2, 3, 5, 5], -1.0, 1.0, &mut rng);
            let g = nn::conv2d_backward(&x, &w, &r)?;
            let ex = grad_check(|p| Ok(project(&nn::conv2d(p, &w, &b)?, &r)), &x, &corrupt(g.dx, fault), h)?;
            let ew = grad_check(|p| Ok(project(&nn::conv2d(&x, p, &b)?, &r)), &w, &g.dw, h)?;
            let eb = grad_check(|p| Ok(project(&nn::conv2d(&x, &w, p)?, &r)), &b, &g.db, h)?;
            Ok(ex.max(ew).max(eb))
        }
        Check::BatchNorm2d => {
            let x = uniform(&[3, 2, 3, 3], -2.0, 2.0, &mut rng);
            let r = uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
            let mut state = nn::BatchNormState::<f64>::new(2)?;
            state.gamma = uniform(&[2], 0.5, 1.5, &mut rng);
            state.beta = uniform(&[2], -0.5, 0.5, &mut rng);
            let run = |x: &Tensor<f64>, gamma: &Tensor<f64>, beta: &Tensor<f64>| -> Result<f64> {
                let mut s = state.clone();
                s.gamma = gamma.clone();
                s.beta = beta.clone();
                Ok(project(&nn::batchnorm2d_train(x, &mut s)?.0, &r))
            };
            let (_, cache) = nn::batchnorm2d_train(&x, &mut state.clone())?;
            let g = nn::batchnorm2d_backward(&cache, &state.gamma, &r)?;
            let (gamma, beta) = (&state.gamma, &state.beta);
            let ex = grad_check(|p| run(p, gamma, beta), &x, &corrupt(g.dx, fault), h)?;
            let eg = grad_check(|p| run(&x, p, beta), gamma, &g.dgamma, h)?;
            let eb = grad_check(|p| run(&x, gamma, p), beta, &g.dbeta, h)?;
            Ok(ex.max(eg).max(eb))
        }
        Check::Relu => {
            let x = away_from_zero(&[2, 3, 4], &mut rng);
            let r = uniform(&[2, 3, 4], -1.0, 1.0, &mut rng);
            let dx = nn::relu_backward(&x, &r)?;
            grad_check(|p| Ok(project(&nn::relu(p), &r)), &x, &corrupt(dx, fault), h)
        }
        Check::MaxPool2d => {
            let x = well_separated(&[2, 2, 6, 6], &mut rng);
            let r = uniform(&[2, 2, 3, 3], -1.0, 1.0, &mut rng);
            let (_, cache) = nn::maxpool2d(&x)?;
            let dx = nn::maxpool2d_backward(&cache, &r)?;
            grad_check(|p| Ok(project(&nn::maxpool2d(p)?.0, &r)), &x, &corrupt(dx, fault), h)
        }
        Check::AdaptiveAvgPool2d => {
            // both shrinking (7→3) and expanding (3→5) windows
            let mut worst = 0.0f64;
            for (shape, out) in [([2, 2, 7, 7], (3, 3)), ([1, 2, 3, 3], (5, 5))] {
                let x = uniform(&shape, -1.0, 1.0, &mut rng);
                let r = uniform(&[shape[0], 2, out.0, out.1], -1.0, 1.0, &mut rng);
                let dx = nn::adaptive_avgpool2d_backward(x.shape(), out, &r)?;
                let e = grad_check(
                    |p| Ok(project(&nn::adaptive_avgpool2d(p, out)?, &r)),
                    &x,
                    &corrupt(dx, fault),
                    h,
                )?;
                worst = worst.max(e);
            }
            Ok(worst)
        }
        Check::Dropout => {
            let x = uniform(&[4, 5], -1.0, 1.0, &mut rng);
            let r = uniform(&[4, 5], -1.0, 1.0, &mut rng);
            let mask_rng = rng.child(&[0]);
            let (_, mask) = nn::dropout(&x, 0.2, Mode::Train, &mut mask_rng.clone())?;
            let dx = nn::dropout_backward(mask.as_ref(), &r)?;
            grad_check(
                |p| Ok(project(&nn::dropout(p, 0.2, Mode::Train, &mut mask_rng.clone())?.0, &r)),
                &x,
                &corrupt(dx, fault),
                h,
            )
        }
        Check::Dense => {
            let x = uniform(&[2, 3], -1.0, 1.0, &mut rng);
            let w = uniform(&[3, 4], -1.0, 1.0, &mut rng);
            let b = uniform(&[4], -1.0, 1.0, &mut rng);
            let r = uniform(&[2, 4], -1.0, 1.0, &mut rng);
            let g = nn::dense_backward(&x, &w, &r)?;
            let ex = grad_check(|p| Ok(project(&nn::dense(p, &w, &b)?, &r)), &x, &corrupt(g.dx, fault), h)?;
            let ew = grad_check(|p| Ok(project(&nn::dense(&x, p, &b)?, &r)), &w, &g.dw, h)?;
            let eb = grad_check(|p| Ok(project(&nn::dense(&x, &w, p)?, &r)), &b, &g.db, h)?;
            Ok(ex.max(ew).max(eb))
        }
        Check::SoftmaxCrossEntropy => {
            let logits = uniform(&[3, 11], -3.0, 3.0, &mut rng);
            let labels: Vec<usize> = (0..3).map(|_| rng.below(11) as usize).collect();
            let (_, dl) = nn::softmax_cross_entropy(&logits, &labels)?;
            grad_check(
                |p| Ok(nn::softmax_cross_entropy(p, &labels)?.0),
                &logits,
                &corrupt(dl, fault),
                h,
            )
        }
        Check::Network => network_check(spec, seed, fault),
    }
}

/// Checks every parameter gradient of `spec` under a train-mode forward with
/// fixed dropout masks.
fn network_check(spec: &ModelSpec, seed: u64, fault: bool) -> Result<f64> {
    let mut graph = ModelGraph::<f64>::new(spec, seed)?;
    let mut rng = Rng::new(seed).child(&[0xC4EC]);
    let n = 4;
    let [c, hh, ww] = spec.input;
    let x = uniform(&[n, c, hh, ww], -1.0, 1.0, &mut rng);
    let labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
    let fwd_rng = rng.child(&[1]);

    let logits = graph.forward_train(&x, &fwd_rng)?;
    let (_, dl) = nn::softmax_cross_entropy(&logits, &labels)?;
    let grads = graph.backward(&dl)?;

    let mut worst = 0.0f64;
    for (i, grad) in grads.into_iter().enumerate() {
        let original = graph.params()[i].clone();
        let analytic = corrupt(grad, fault);
        let e = grad_check(
            |p| {
                let mut g = graph.clone();
                *g.params_mut()[i] = p.clone();
                let y = g.forward_train(&x, &fwd_rng)?;
                Ok(nn::softmax_cross_entropy(&y, &labels)?.0)
            },
            &original,
            &analytic,
            STEP,
        )?;
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Runs `checks` over `seeds`; `fault` names one check whose analytic
/// gradients are corrupted.
pub fn run_suite(spec: &ModelSpec, checks: &[Check], seeds: &[u64], fault: Option<Check>) -> Result<SuiteReport> {
    if seeds.is_empty() {
        return Err(Error::config("gradient check needs at least one seed"));
    }
    let mut results = Vec::with_capacity(checks.len());
    for &check in checks {
        let mut worst = 0.0f64;
        for &seed in seeds {
            worst = worst.max(run_check(check, spec, seed, fault == Some(check))?);
        }
        results.push(CheckResult {
            check,
            worst,
            seeds: seeds.len(),
        });
    }
    Ok(SuiteReport { results })
}
