//! Declarative architecture descriptions, presets and parameter counting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::KERNEL;

/// Number of cooking-state classes.
pub const NUM_CLASSES: usize = 11;

/// One entry in a [`ModelSpec`] layer list.
///
/// A `conv` entry is a whole block: 3×3 convolution, optional batch norm,
/// ReLU and optional dropout, in that order. Every `dense` entry except the
/// last is followed by a ReLU; the last one produces the logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        #[serde(default)]
        batchnorm: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dropout: Option<f64>,
    },
    Maxpool,
    AdaptiveAvgpool {
        out: [usize; 2],
    },
    Dropout {
        p: f64,
    },
    Dense {
        out_features: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// `[channels, height, width]` of one input sample.
    pub input: [usize; 3],
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// Activation shape after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

/// Trainable parameters contributed by one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerParams {
    pub name: String,
    pub weights: usize,
    pub biases: usize,
    pub batchnorm: usize,
}

impl LayerParams {
    pub fn total(&self) -> usize {
        self.weights + self.biases + self.batchnorm
    }
}

/// Options of the six-convolution cooking-state architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposedOptions {
    pub pool_out: [usize; 2],
    pub batchnorm: bool,
    pub conv_dropout: bool,
}

impl Default for ProposedOptions {
    fn default() -> Self {
        Self {
            pool_out: [5, 5],
            batchnorm: true,
            conv_dropout: true,
        }
    }
}

pub const PROPOSED_CHANNELS: [usize; 6] = [16, 32, 32, 64, 128, 128];
pub const DROPOUT_P: f64 = 0.2;

/// Six conv blocks `[16, 32, 32, 64, 128, 128]` (each conv → BN → ReLU →
/// 2×2 max pool), dropout 0.2 after blocks 2, 4 and 6, adaptive average
/// pooling, dropout 0.2, and one dense layer onto the 11 states.
pub fn preset_proposed(opts: ProposedOptions) -> ModelSpec {
    let mut layers = Vec::new();
    for (i, &ch) in PROPOSED_CHANNELS.iter().enumerate() {
        layers.push(LayerSpec::Conv {
            out_channels: ch,
            batchnorm: opts.batchnorm,
            dropout: None,
        });
        layers.push(LayerSpec::Maxpool);
        if opts.conv_dropout && i % 2 == 1 {
            layers.push(LayerSpec::Dropout { p: DROPOUT_P });
        }
    }
    layers.push(LayerSpec::AdaptiveAvgpool { out: opts.pool_out });
    layers.push(LayerSpec::Dropout { p: DROPOUT_P });
    layers.push(LayerSpec::Dense {
        out_features: NUM_CLASSES,
    });
    ModelSpec {
        input: [3, 224, 224],
        classes: NUM_CLASSES,
        layers,
    }
}

/// The 16-layer VGG configuration (13 convolutions, 5 max pools, 3 dense
/// layers) with its original 1000-way ImageNet head.
pub fn preset_vgg16() -> ModelSpec {
    const CFG: [Option<usize>; 18] = [
        Some(64), Some(64), None,
        Some(128), Some(128), None,
        Some(256), Some(256), Some(256), None,
        Some(512), Some(512), Some(512), None,
        Some(512), Some(512), Some(512), None,
    ];
    let mut layers: Vec<LayerSpec> = CFG
        .iter()
        .map(|c| match c {
            Some(ch) => LayerSpec::Conv {
                out_channels: *ch,
                batchnorm: false,
                dropout: None,
            },
            None => LayerSpec::Maxpool,
        })
        .collect();
    layers.extend([
        LayerSpec::AdaptiveAvgpool { out: [7, 7] },
        LayerSpec::Dense { out_features: 4096 },
        LayerSpec::Dropout { p: 0.5 },
        LayerSpec::Dense { out_features: 4096 },
        LayerSpec::Dropout { p: 0.5 },
        LayerSpec::Dense { out_features: 1000 },
    ]);
    ModelSpec {
        input: [3, 224, 224],
        classes: 1000,
        layers,
    }
}

/// Desk-scale network using every layer type: 8×8 RGB input, two conv
/// blocks of 2 channels, 2 classes. Used by gradient checks.
pub fn preset_tiny() -> ModelSpec {
    ModelSpec {
        input: [3, 8, 8],
        classes: 2,
        layers: vec![
            LayerSpec::Conv {
                out_channels: 2,
                batchnorm: true,
                dropout: None,
            },
            LayerSpec::Maxpool,
            LayerSpec::Conv {
                out_channels: 2,
                batchnorm: true,
                dropout: Some(DROPOUT_P),
            },
            LayerSpec::Maxpool,
            LayerSpec::Dropout { p: DROPOUT_P },
            LayerSpec::AdaptiveAvgpool { out: [3, 3] },
            LayerSpec::Dropout { p: DROPOUT_P },
            LayerSpec::Dense { out_features: 2 },
        ],
    }
}

/// Looks up a preset by name: `proposed`, `vgg16`, `tiny`.
pub fn preset_by_name(name: &str) -> Result<ModelSpec> {
    match name {
        "proposed" => Ok(preset_proposed(ProposedOptions::default())),
        "vgg16" => Ok(preset_vgg16()),
        "tiny" | "proposed-tiny" => Ok(preset_tiny()),
        other => Err(Error::config(format!(
            "unknown model preset {other:?} (expected proposed, vgg16 or tiny)"
        ))),
    }
}

fn check_p(p: f64, what: &str) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!(
            "{what}: dropout probability {p} outside [0, 1)"
        )));
    }
    Ok(())
}

impl ModelSpec {
    /// Checks structural invariants and returns the activation shape after
    /// every layer.
    pub fn trace(&self) -> Result<Vec<ActShape>> {
        let [c, h, w] = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::config("model input dimensions must be positive"));
        }
        if self.classes == 0 {
            return Err(Error::config("model needs at least one class"));
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { out_features }) if *out_features == self.classes => {}
            _ => {
                return Err(Error::config(format!(
                    "the last layer must be dense with {} outputs",
                    self.classes
                )))
            }
        }
        let mut shape = ActShape::Map { c, h, w };
        let mut seen_pool = false;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let at = format!("layer {} ({layer:?})", i + 1);
            shape = match (*layer, shape) {
                (LayerSpec::Conv { out_channels, dropout, .. }, ActShape::Map { h, w, .. }) => {
                    if seen_pool {
                        return Err(Error::config(format!(
                            "{at}: convolutions must precede adaptive pooling"
                        )));
                    }
                    if out_channels == 0 {
                        return Err(Error::config(format!("{at}: zero output channels")));
                    }
                    if let Some(p) = dropout {
                        check_p(p, &at)?;
                    }
                    ActShape::Map { c: out_channels, h, w }
                }
                (LayerSpec::Maxpool, ActShape::Map { c, h, w }) => {
                    if h < 2 || w < 2 {
                        return Err(Error::shape(format!(
                            "{at}: max pooling a {h}×{w} map; input too small"
                        )));
                    }
                    ActShape::Map { c, h: h / 2, w: w / 2 }
                }
                (LayerSpec::AdaptiveAvgpool { out: [oh, ow] }, ActShape::Map { c, .. }) => {
                    if seen_pool {
                        return Err(Error::config(format!(
                            "{at}: adaptive pooling may appear only once"
                        )));
                    }
                    if oh == 0 || ow == 0 {
                        return Err(Error::config(format!("{at}: zero output size")));
                    }
                    seen_pool = true;
                    ActShape::Map { c, h: oh, w: ow }
                }
                (LayerSpec::Dropout { p }, s) => {
                    check_p(p, &at)?;
                    s
                }
                (LayerSpec::Dense { out_features }, _) => {
                    if out_features == 0 {
                        return Err(Error::config(format!("{at}: zero output features")));
                    }
                    ActShape::Flat(out_features)
                }
                (_, ActShape::Flat(_)) => {
                    return Err(Error::config(format!(
                        "{at}: spatial layer after a dense layer"
                    )))
                }
            };
            out.push(shape);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.trace().map(|_| ())
    }

    /// Per-layer trainable parameter counts.
    pub fn param_breakdown(&self) -> Result<Vec<LayerParams>> {
        let trace = self.trace()?;
        let mut prev = ActShape::Map {
            c: self.input[0],
            h: self.input[1],
            w: self.input[2],
        };
        let (mut conv_i, mut fc_i) = (0, 0);
        let mut rows = Vec::new();
        for (layer, &shape) in self.layers.iter().zip(&trace) {
            match *layer {
                LayerSpec::Conv { out_channels, batchnorm, .. } => {
                    conv_i += 1;
                    let ActShape::Map { c: cin, .. } = prev else { unreachable!() };
                    rows.push(LayerParams {
                        name: format!("conv{conv_i}"),
                        weights: KERNEL * KERNEL * cin * out_channels,
                        biases: out_channels,
                        batchnorm: if batchnorm { 2 * out_channels } else { 0 },
                    });
                }
                LayerSpec::Dense { out_features } => {
                    fc_i += 1;
                    let fan_in = match prev {
                        ActShape::Map { c, h, w } => c * h * w,
                        ActShape::Flat(f) => f,
                    };
                    rows.push(LayerParams {
                        name: format!("fc{fc_i}"),
                        weights: fan_in * out_features,
                        biases: out_features,
                        batchnorm: 0,
                    });
                }
                _ => {}
            }
            prev = shape;
        }
        Ok(rows)
    }

    /// Spatial side lengths entering each max pool followed by the final
    /// pre-adaptive-pool size.
    pub fn spatial_trace(&self) -> Result<Vec<usize>> {
        let trace = self.trace()?;
        let mut sizes = vec![self.input[1]];
        for (layer, shape) in self.layers.iter().zip(trace) {
            if let (LayerSpec::Maxpool, ActShape::Map { h, .. }) = (layer, shape) {
                sizes.push(h);
            }
        }
        Ok(sizes)
    }

    pub fn conv_channels(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv { out_channels, .. } => Some(*out_channels),
                _ => None,
            })
            .collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize model spec: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid model spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Trainable parameter total.
pub fn count_params(spec: &ModelSpec) -> Result<usize> {
    Ok(spec.param_breakdown()?.iter().map(LayerParams::total).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent closed-form count for the six-conv preset family.
    fn oracle(pool: usize, bn: bool) -> usize {
        let mut cin = 3;
        let mut total = 0;
        for &c in &PROPOSED_CHANNELS {
            total += (9 * cin + 1) * c;
            if bn {
                total += 2 * c;
            }
            cin = c;
        }
        total + (128 * pool * pool + 1) * 11
    }

    #[test]
    fn proposed_has_290283_parameters() {
        let spec = preset_proposed(ProposedOptions::default());
        assert_eq!(count_params(&spec).unwrap(), 290_283);
        assert_eq!(oracle(5, true), 290_283);
    }

    #[test]
    fn first_conv_and_dense_only_counts() {
        let spec = preset_proposed(ProposedOptions::default());
        let rows = spec.param_breakdown().unwrap();
        assert_eq!(rows[0].weights + rows[0].biases, 448);
        let dense_only = ModelSpec {
            input: [10, 1, 1],
            classes: 11,
            layers: vec![LayerSpec::Dense { out_features: 11 }],
        };
        assert_eq!(count_params(&dense_only).unwrap(), 121);
    }

    #[test]
    fn batchnorm_toggle_removes_800() {
        let with = count_params(&preset_proposed(ProposedOptions::default())).unwrap();
        let without = count_params(&preset_proposed(ProposedOptions {
            batchnorm: false,
            ..Default::default()
        }))
        .unwrap();
        assert_eq!(with - without, 800);
    }

    #[test]
    fn pool_ablation_counts() {
        for pool in [3, 5, 7] {
            let spec = preset_proposed(ProposedOptions {
                pool_out: [pool, pool],
                ..Default::default()
            });
            assert_eq!(count_params(&spec).unwrap(), oracle(pool, true));
        }
        assert_eq!(oracle(7, true), 255_072 + (128 * 49 + 1) * 11);
    }

    #[test]
    fn proposed_traces() {
        let spec = preset_proposed(ProposedOptions::default());
        assert_eq!(spec.conv_channels(), PROPOSED_CHANNELS);
        assert_eq!(spec.spatial_trace().unwrap(), vec![224, 112, 56, 28, 14, 7, 3]);
        let dropouts = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Dropout { .. }))
            .count();
        assert_eq!(dropouts, 4);
    }

    #[test]
    fn vgg16_counts_138m() {
        let spec = preset_vgg16();
        spec.validate().unwrap();
        assert_eq!(count_params(&spec).unwrap(), 138_357_544);
        assert_eq!(spec.conv_channels().len(), 13);
    }

    #[test]
    fn invariants_rejected() {
        let mut spec = preset_tiny();
        spec.layers.pop();
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        let mut spec = preset_tiny();
        spec.layers.insert(6, LayerSpec::AdaptiveAvgpool { out: [1, 1] });
        assert!(spec.validate().is_err());

        let mut spec = preset_tiny();
        spec.input = [3, 2, 2];
        assert!(matches!(spec.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn toml_round_trip() {
        let spec = preset_proposed(ProposedOptions::default());
        let text = spec.to_toml().unwrap();
        assert_eq!(ModelSpec::from_toml(&text).unwrap(), spec);
        assert!(ModelSpec::from_toml("input = [3, 8, 8]\nclasses = 2\nlayers = []\nfoo = 1\n").is_err());
    }
}
