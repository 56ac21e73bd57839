//! Declarative network description, read from TOML.
//!
//! ```toml
//! version = 1
//! [input]
//! channels = 1
//! height = 28
//! width = 28
//!
//! [[layers]]
//! kind = "convolution"
//! outputs = 20
//! kernel = 5
//!
//! [softmax]
//! classes = 10
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

fn one() -> usize {
    1
}
fn lrn_size() -> usize {
    5
}
fn lrn_alpha() -> f64 {
    1e-4
}
fn lrn_beta() -> f64 {
    0.75
}
fn lrn_k() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    Convolution {
        outputs: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    MaxPool {
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    AvgPool {
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    InnerProduct {
        outputs: usize,
    },
    Relu,
    /// Cross-channel local response normalisation; the defaults are the
    /// usual AlexNet/Caffe constants.
    Lrn {
        #[serde(default = "lrn_size")]
        local_size: usize,
        #[serde(default = "lrn_alpha")]
        alpha: f64,
        #[serde(default = "lrn_beta")]
        beta: f64,
        #[serde(default = "lrn_k")]
        k: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftmaxSpec {
    pub classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashHeadSpec {
    pub bits: usize,
}

fn default_gain() -> f64 {
    1.0
}

/// Weight initialisation: zero biases and Gaussian weights with standard
/// deviation `gain / sqrt(fan_in)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default = "default_gain")]
    pub gain: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            gain: default_gain(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NetConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub input: InputSpec,
    #[serde(default)]
    pub init: InitSpec,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub softmax: Option<SoftmaxSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_head: Option<HashHeadSpec>,
}

impl NetConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: NetConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("network config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported network config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("network config serialises")
    }

    /// LeNet-style topology used for MNIST: two 5x5 convolutions with 2x2
    /// max pooling, a 500-unit inner product and ReLU.
    pub fn mnist() -> Self {
        NetConfig {
            version: CONFIG_VERSION,
            name: Some("mnist".into()),
            input: InputSpec {
                channels: 1,
                height: 28,
                width: 28,
            },
            init: InitSpec::default(),
            layers: vec![
                LayerSpec::Convolution {
                    outputs: 20,
                    kernel: 5,
                    stride: 1,
                    pad: 0,
                },
                LayerSpec::MaxPool {
                    kernel: 2,
                    stride: 2,
                    pad: 0,
                },
                LayerSpec::Convolution {
                    outputs: 50,
                    kernel: 5,
                    stride: 1,
                    pad: 0,
                },
                LayerSpec::MaxPool {
                    kernel: 2,
                    stride: 2,
                    pad: 0,
                },
                LayerSpec::InnerProduct { outputs: 500 },
                LayerSpec::Relu,
            ],
            softmax: Some(SoftmaxSpec { classes: 10 }),
            hash_head: None,
        }
    }

    /// Three-convolution topology for 32x32 colour images (CIFAR-10).
    pub fn cifar10() -> Self {
        let conv = |outputs| LayerSpec::Convolution {
            outputs,
            kernel: 5,
            stride: 1,
            pad: 2,
        };
        let lrn = LayerSpec::Lrn {
            local_size: lrn_size(),
            alpha: lrn_alpha(),
            beta: lrn_beta(),
            k: lrn_k(),
        };
        NetConfig {
            version: CONFIG_VERSION,
            name: Some("cifar10".into()),
            input: InputSpec {
                channels: 3,
                height: 32,
                width: 32,
            },
            init: InitSpec::default(),
            layers: vec![
                conv(32),
                LayerSpec::MaxPool {
                    kernel: 3,
                    stride: 2,
                    pad: 0,
                },
                LayerSpec::Relu,
                lrn.clone(),
                conv(32),
                LayerSpec::Relu,
                LayerSpec::AvgPool {
                    kernel: 3,
                    stride: 2,
                    pad: 0,
                },
                lrn,
                conv(64),
                LayerSpec::Relu,
                LayerSpec::AvgPool {
                    kernel: 3,
                    stride: 2,
                    pad: 0,
                },
            ],
            softmax: Some(SoftmaxSpec { classes: 10 }),
            hash_head: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        for cfg in [NetConfig::mnist(), NetConfig::cifar10()] {
            let back = NetConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn defaults_apply() {
        let cfg = NetConfig::from_toml(
            r#"
            version = 1
            [input]
            channels = 1
            height = 4
            width = 4
            [[layers]]
            kind = "max-pool"
            kernel = 2
            [[layers]]
            kind = "lrn"
            "#,
        )
        .unwrap();
        assert_eq!(
            cfg.layers[0],
            LayerSpec::MaxPool {
                kernel: 2,
                stride: 1,
                pad: 0
            }
        );
        assert!(matches!(
            cfg.layers[1],
            LayerSpec::Lrn { local_size: 5, .. }
        ));
        assert_eq!(cfg.init.gain, 1.0);
    }

    #[test]
    fn rejects_bad_version_and_kinds() {
        let bad_version = NetConfig::mnist()
            .to_toml()
            .replace("version = 1", "version = 9");
        assert!(matches!(
            NetConfig::from_toml(&bad_version),
            Err(Error::Config(_))
        ));
        let bad_kind =
            "version = 1\n[input]\nchannels=1\nheight=1\nwidth=1\n[[layers]]\nkind = \"dropout\"\n";
        assert!(NetConfig::from_toml(bad_kind).is_err());
    }
}
