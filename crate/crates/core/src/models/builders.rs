//! Architecture builders for the LeNet-style classifier, the NiN classifier
//! and the two keypoint regressors.

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::layers::PoolMode;
use crate::tensor::Shape4;

/// Builder-independent knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildOptions {
    pub pool_mode: PoolMode,
    /// Divides every hidden channel count and hidden dense width (rounding
    /// up, minimum 1). Output widths are never scaled. Used to shrink
    /// networks for gradient checks.
    pub width_divisor: usize,
    /// NiN only: insert dropout (keep 0.5) after the first two blocks.
    pub dropout: bool,
    /// NiN only: channel width of block 1; blocks 2 and 3 use twice this.
    pub nin_width: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            pool_mode: PoolMode::Max,
            width_divisor: 1,
            dropout: false,
            nin_width: 32,
        }
    }
}

impl BuildOptions {
    fn w(&self, c: usize) -> usize {
        c.div_ceil(self.width_divisor.max(1)).max(1)
    }

    fn pool2(&self) -> LayerSpec {
        LayerSpec::Pool {
            window: 2,
            stride: 2,
            mode: self.pool_mode,
        }
    }
}

fn check_side(input_side: usize) -> Result<()> {
    if input_side != 32 && input_side != 64 {
        return Err(Error::Config(format!(
            "input side must be 32 or 64, got {input_side}"
        )));
    }
    Ok(())
}

fn check_counts(in_channels: usize, num_classes: usize) -> Result<()> {
    if in_channels == 0 || num_classes == 0 {
        return Err(Error::Config("channel and class counts must be positive".into()));
    }
    Ok(())
}

pub fn lenet_spec(
    input_side: usize,
    in_channels: usize,
    num_classes: usize,
    opts: &BuildOptions,
) -> Result<NetworkSpec> {
    check_side(input_side)?;
    check_counts(in_channels, num_classes)?;
    let mut layers = Vec::new();
    if input_side == 64 {
        layers.extend([LayerSpec::conv(opts.w(6), 5, 2), opts.pool2(), LayerSpec::Relu]);
    }
    layers.extend([
        LayerSpec::conv(opts.w(6), 5, 0),
        opts.pool2(),
        LayerSpec::Relu,
        LayerSpec::conv(opts.w(16), 5, 0),
        opts.pool2(),
        LayerSpec::Relu,
        LayerSpec::conv(opts.w(120), 5, 0),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { out_dim: opts.w(84) },
        LayerSpec::Relu,
        LayerSpec::Dense { out_dim: num_classes },
        LayerSpec::SoftmaxHead,
    ]);
    let spec = NetworkSpec {
        name: format!("lenet{input_side}"),
        input: Shape4::new(1, in_channels, input_side, input_side)?,
        layers,
        output_dim: num_classes,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn nin_spec(
    input_side: usize,
    in_channels: usize,
    num_classes: usize,
    opts: &BuildOptions,
) -> Result<NetworkSpec> {
    check_side(input_side)?;
    check_counts(in_channels, num_classes)?;
    if opts.nin_width == 0 {
        return Err(Error::Config("NiN width must be positive".into()));
    }
    let a = opts.w(opts.nin_width);
    let b = opts.w(2 * opts.nin_width);
    let mut layers = vec![
        LayerSpec::MlpConv {
            channels: [a, a, a],
            kernel: 5,
            padding: 2,
        },
        opts.pool2(),
    ];
    if opts.dropout {
        layers.push(LayerSpec::Dropout {
            keep_probability: 0.5,
        });
    }
    layers.extend([
        LayerSpec::MlpConv {
            channels: [b, b, b],
            kernel: 3,
            padding: 1,
        },
        opts.pool2(),
    ]);
    if opts.dropout {
        layers.push(LayerSpec::Dropout {
            keep_probability: 0.5,
        });
    }
    layers.extend([
        LayerSpec::MlpConv {
            channels: [b, b, num_classes],
            kernel: 3,
            padding: 1,
        },
        LayerSpec::GlobalAvgPool,
        LayerSpec::SoftmaxHead,
    ]);
    let spec = NetworkSpec {
        name: format!("nin{input_side}"),
        input: Shape4::new(1, in_channels, input_side, input_side)?,
        layers,
        output_dim: num_classes,
    };
    spec.validate()?;
    Ok(spec)
}

pub const KEYPOINT_SIDE: usize = 96;
pub const KEYPOINT_OUTPUTS: usize = 30;

/// Baseline: three conv/pool/relu blocks and two 500-wide dense layers.
/// Modified: every conv is followed by a same-width 3×3 conv (padding 1) and
/// ReLU, and a block of two 256-channel 3×3 convs closes the trunk. That
/// block sits on an 11×11 map, which a 2×2 window only tiles at stride 1, so
/// its pool uses window 2, stride 1.
pub fn keypoint_spec(modified: bool, opts: &BuildOptions) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    for (c, k) in [(32, 3), (64, 2), (128, 2)] {
        layers.push(LayerSpec::conv(opts.w(c), k, 0));
        if modified {
            layers.extend([LayerSpec::conv(opts.w(c), 3, 1), LayerSpec::Relu]);
        }
        layers.extend([opts.pool2(), LayerSpec::Relu]);
    }
    if modified {
        layers.extend([
            LayerSpec::conv(opts.w(256), 3, 1),
            LayerSpec::conv(opts.w(256), 3, 1),
            LayerSpec::Pool {
                window: 2,
                stride: 1,
                mode: opts.pool_mode,
            },
            LayerSpec::Relu,
        ]);
    }
    layers.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense { out_dim: opts.w(500) },
        LayerSpec::Relu,
        LayerSpec::Dense { out_dim: opts.w(500) },
        LayerSpec::Relu,
        LayerSpec::Dense {
            out_dim: KEYPOINT_OUTPUTS,
        },
        LayerSpec::LinearHead,
    ]);
    let spec = NetworkSpec {
        name: if modified { "keypoint-modified" } else { "keypoint" }.into(),
        input: Shape4::new(1, 1, KEYPOINT_SIDE, KEYPOINT_SIDE)?,
        layers,
        output_dim: KEYPOINT_OUTPUTS,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn build_lenet_classifier(
    input_side: usize,
    in_channels: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Network> {
    Network::new(
        lenet_spec(input_side, in_channels, num_classes, &BuildOptions::default())?,
        seed,
    )
}

pub fn build_nin_classifier(
    input_side: usize,
    in_channels: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Network> {
    Network::new(
        nin_spec(input_side, in_channels, num_classes, &BuildOptions::default())?,
        seed,
    )
}

pub fn build_keypoint_net(modified: bool, seed: u64) -> Result<Network> {
    Network::new(keypoint_spec(modified, &BuildOptions::default())?, seed)
}

/// Which builder to run, with its arguments. Serialised as the `model`
/// section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Lenet {
        input_side: usize,
        in_channels: usize,
        num_classes: usize,
        #[serde(default)]
        options: BuildOptions,
    },
    Nin {
        input_side: usize,
        in_channels: usize,
        num_classes: usize,
        #[serde(default)]
        options: BuildOptions,
    },
    Keypoint {
        #[serde(default)]
        modified: bool,
        #[serde(default)]
        options: BuildOptions,
    },
}

impl ModelConfig {
    pub fn spec(&self) -> Result<NetworkSpec> {
        match self {
            ModelConfig::Lenet {
                input_side,
                in_channels,
                num_classes,
                options,
            } => lenet_spec(*input_side, *in_channels, *num_classes, options),
            ModelConfig::Nin {
                input_side,
                in_channels,
                num_classes,
                options,
            } => nin_spec(*input_side, *in_channels, *num_classes, options),
            ModelConfig::Keypoint { modified, options } => keypoint_spec(*modified, options),
        }
    }
}
