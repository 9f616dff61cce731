use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    Deconv,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Concat,
    FullyConnected,
    BatchNorm,
    Reshape,
}

/// One layer, encodable as `type_channels_kernel_stride` (`C_64_7_2`, `DC_512_3_2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Output channels (features for fully-connected layers).
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/columns appended by a transposed convolution.
    pub output_padding: usize,
    /// Spatial size produced by `Reshape`.
    pub height: usize,
    pub width: usize,
}

impl LayerSpec {
    fn bare(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            channels: 0,
            kernel: 0,
            stride: 1,
            padding: 0,
            output_padding: 0,
            height: 0,
            width: 0,
        }
    }

    /// Convolution with "same"-style padding: output = ceil(input / stride).
    pub fn conv(channels: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec {
            channels,
            kernel,
            stride,
            padding: (kernel - 1) / 2,
            ..Self::bare(LayerKind::Conv)
        }
    }

    pub fn conv_padded(channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec {
            channels,
            kernel,
            stride,
            padding,
            ..Self::bare(LayerKind::Conv)
        }
    }

    /// Transposed convolution with output = input * stride.
    pub fn deconv(channels: usize, kernel: usize, stride: usize) -> Self {
        let padding = (kernel - 1) / 2;
        // (H - 1) s - 2p + k + op = H s
        let output_padding = stride + 2 * padding - kernel;
        LayerSpec {
            channels,
            kernel,
            stride,
            padding,
            output_padding,
            ..Self::bare(LayerKind::Deconv)
        }
    }

    pub fn deconv_padded(channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        let output_padding = (stride + 2 * padding).saturating_sub(kernel);
        LayerSpec {
            channels,
            kernel,
            stride,
            padding,
            output_padding,
            ..Self::bare(LayerKind::Deconv)
        }
    }

    pub fn relu() -> Self {
        Self::bare(LayerKind::Relu)
    }

    pub fn leaky_relu() -> Self {
        Self::bare(LayerKind::LeakyRelu)
    }

    pub fn tanh() -> Self {
        Self::bare(LayerKind::Tanh)
    }

    pub fn sigmoid() -> Self {
        Self::bare(LayerKind::Sigmoid)
    }

    pub fn concat() -> Self {
        Self::bare(LayerKind::Concat)
    }

    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec {
            channels,
            ..Self::bare(LayerKind::BatchNorm)
        }
    }

    pub fn fully_connected(features: usize) -> Self {
        LayerSpec {
            channels: features,
            ..Self::bare(LayerKind::FullyConnected)
        }
    }

    pub fn reshape(channels: usize, height: usize, width: usize) -> Self {
        LayerSpec {
            channels,
            height,
            width,
            ..Self::bare(LayerKind::Reshape)
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Conv | LayerKind::Deconv | LayerKind::FullyConnected | LayerKind::BatchNorm
        )
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LayerKind::Conv | LayerKind::Deconv => {
                let tag = if self.kind == LayerKind::Conv { "C" } else { "DC" };
                write!(f, "{tag}_{}_{}_{}", self.channels, self.kernel, self.stride)?;
                let default_pad = (self.kernel - 1) / 2;
                if self.padding != default_pad {
                    write!(f, "_p{}", self.padding)?;
                }
                Ok(())
            }
            LayerKind::Relu => f.write_str("ReLU"),
            LayerKind::LeakyRelu => f.write_str("LReLU"),
            LayerKind::Tanh => f.write_str("Tanh"),
            LayerKind::Sigmoid => f.write_str("Sigmoid"),
            LayerKind::Concat => f.write_str("CAT"),
            LayerKind::FullyConnected => write!(f, "FC_{}", self.channels),
            LayerKind::BatchNorm => write!(f, "BN_{}", self.channels),
            LayerKind::Reshape => write!(f, "R_{}_{}_{}", self.channels, self.height, self.width),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unrecognized layer name {s:?}"));
        let num = |p: Option<&str>| -> Result<usize> {
            p.ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())
        };
        let mut parts = s.split('_');
        let head = parts.next().ok_or_else(bad)?;
        let spec = match head {
            "C" | "DC" => {
                let (c, k, st) = (num(parts.next())?, num(parts.next())?, num(parts.next())?);
                if !(1..=2).contains(&st) || k == 0 {
                    return Err(bad());
                }
                let pad = match parts.next() {
                    Some(p) => num(p.strip_prefix('p'))?,
                    None => (k - 1) / 2,
                };
                if head == "C" {
                    LayerSpec::conv_padded(c, k, st, pad)
                } else {
                    LayerSpec::deconv_padded(c, k, st, pad)
                }
            }
            "ReLU" => LayerSpec::relu(),
            "LReLU" => LayerSpec::leaky_relu(),
            "Tanh" => LayerSpec::tanh(),
            "Sigmoid" => LayerSpec::sigmoid(),
            "CAT" => LayerSpec::concat(),
            "FC" => LayerSpec::fully_connected(num(parts.next())?),
            "BN" => LayerSpec::batch_norm(num(parts.next())?),
            "R" => LayerSpec::reshape(num(parts.next())?, num(parts.next())?, num(parts.next())?),
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(spec)
    }
}

/// Input footprint of one output neuron and the cumulative stride between
/// neighbouring output neurons, both in input pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptiveField {
    pub size: f64,
    pub stride: f64,
}

/// Standard recurrence `rf += (k - 1) * jump; jump *= stride` over the specs.
///
/// A transposed convolution with stride `s` sees `ceil(k / s)` input positions
/// per output pixel and divides the jump by `s`.
pub fn receptive_field(specs: &[LayerSpec]) -> Result<ReceptiveField> {
    let mut rf = 1.0f64;
    let mut jump = 1.0f64;
    for spec in specs {
        match spec.kind {
            LayerKind::Conv => {
                rf += (spec.kernel as f64 - 1.0) * jump;
                jump *= spec.stride as f64;
            }
            LayerKind::Deconv => {
                let taps = spec.kernel.div_ceil(spec.stride) as f64;
                rf += (taps - 1.0) * jump;
                jump /= spec.stride as f64;
            }
            LayerKind::Relu
            | LayerKind::LeakyRelu
            | LayerKind::Tanh
            | LayerKind::Sigmoid
            | LayerKind::BatchNorm => {}
            LayerKind::Concat | LayerKind::FullyConnected | LayerKind::Reshape => {
                return Err(Error::UnsupportedLayer(spec.to_string()));
            }
        }
    }
    Ok(ReceptiveField {
        size: rf,
        stride: jump,
    })
}

pub fn names(specs: &[LayerSpec]) -> String {
    let mut s = String::new();
    for (i, spec) in specs.iter().enumerate() {
        if i > 0 {
            s.push_str(" - ");
        }
        s.push_str(&spec.to_string());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn names_round_trip() {
        for name in ["C_64_7_2", "DC_512_3_2", "C_1_3_1", "ReLU", "Tanh", "FC_2", "BN_128", "C_1_4_1_p0"] {
            let spec: LayerSpec = name.parse().unwrap();
            assert_eq!(spec.to_string(), name);
        }
        assert!("C_64_7_3".parse::<LayerSpec>().is_err());
        assert!("X_1".parse::<LayerSpec>().is_err());
    }

    #[test]
    fn deconv_doubles() {
        let d = LayerSpec::deconv(8, 3, 2);
        assert_eq!((d.padding, d.output_padding), (1, 1));
        let d4 = LayerSpec::deconv(8, 4, 2);
        assert_eq!((d4.padding, d4.output_padding), (1, 0));
    }

    #[test]
    fn receptive_field_small_stacks() {
        let one = receptive_field(&[LayerSpec::conv(8, 3, 1)]).unwrap();
        assert_eq!((one.size, one.stride), (3.0, 1.0));
        let two = receptive_field(&[LayerSpec::conv(8, 3, 1), LayerSpec::relu(), LayerSpec::conv(8, 3, 1)])
            .unwrap();
        assert_eq!((two.size, two.stride), (5.0, 1.0));
        let bad = receptive_field(&vec![LayerSpec::fully_connected(2)]);
        assert!(matches!(bad, Err(Error::UnsupportedLayer(_))));
    }
}
