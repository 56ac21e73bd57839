//! Feed-forward feature network `z = phi(x; theta)` with an optional softmax
//! classifier (used only for pre-training) and the sign hashing head.

mod config;
mod layers;

pub use config::{
    HashHeadSpec, InitSpec, InputSpec, LayerSpec, NetConfig, SoftmaxSpec, CONFIG_VERSION,
};
pub use layers::{Geometry, Layer, ParamGrad, PoolKind};

use layers::{Aux, Conv, InnerProduct, Lrn, Pool};

use crate::bitcode::BitCode;
use crate::error::{Error, Result};
use crate::hashloss::encode_features;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{sgd_step_in_place, Tensor};

/// Softmax classification head used by pre-training stage 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    fc: InnerProduct<T>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(features: usize, classes: usize, gain: f64, rng: &mut Rng) -> Result<Self> {
        Ok(Classifier {
            fc: InnerProduct::new(features, classes, gain, rng)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.fc.outputs
    }

    pub fn features(&self) -> usize {
        self.fc.inputs
    }

    pub fn logits(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        if z.row_len() != self.fc.inputs {
            return Err(Error::dim(format!(
                "classifier expects {} features, got {}",
                self.fc.inputs,
                z.row_len()
            )));
        }
        Ok(self.fc.forward(z))
    }

    /// Mean cross-entropy over the batch, the parameter gradient and the
    /// gradient with respect to `z`.
    pub fn loss_and_grad(
        &self,
        z: &Tensor<T>,
        labels: &[u32],
    ) -> Result<(T, ParamGrad<T>, Tensor<T>)> {
        let logits = self.logits(z)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let (dz, g) = self.fc.backward(z, &dlogits);
        Ok((loss, g, dz))
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.fc.weight
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.fc.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Tensor<T>, &mut Tensor<T>) {
        (&mut self.fc.weight, &mut self.fc.bias)
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[u32],
) -> Result<(T, Tensor<T>)> {
    let (batch, classes) = logits.dims2()?;
    if labels.len() != batch {
        return Err(Error::dim(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let mut grad = Tensor::zeros(&[batch, classes]);
    let mut loss = T::zero();
    let inv = if batch > 0 {
        T::one() / T::from_usize(batch).expect("batch size")
    } else {
        T::zero()
    };
    for (b, &label) in labels.iter().enumerate() {
        let label = label as usize;
        if label >= classes {
            return Err(Error::config(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row = logits.row(b);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        loss += total.ln() - (row[label] - max);
        let g = grad.row_mut(b);
        for c in 0..classes {
            g[c] = exps[c] / total * inv;
        }
        g[label] -= inv;
    }
    Ok((loss * inv, grad))
}

/// Where the current hash-head weights came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadOrigin {
    Random,
    PreTrained,
    FineTuned,
}

impl HeadOrigin {
    pub fn tag(self) -> u8 {
        match self {
            HeadOrigin::Random => 0,
            HeadOrigin::PreTrained => 1,
            HeadOrigin::FineTuned => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(HeadOrigin::Random),
            1 => Some(HeadOrigin::PreTrained),
            2 => Some(HeadOrigin::FineTuned),
            _ => None,
        }
    }
}

/// The `K x dim(z)` hashing head `W`; bit `k` is `sign(w_k' z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashHead<T> {
    pub weights: Tensor<T>,
    pub origin: HeadOrigin,
}

impl<T: Scalar> HashHead<T> {
    pub fn random(bits: usize, dim: usize, gain: f64, rng: &mut Rng) -> Result<Self> {
        if bits == 0 {
            return Err(Error::config("bit count must be at least 1"));
        }
        let std = gain / (dim.max(1) as f64).sqrt();
        Ok(HashHead {
            weights: Tensor::from_vec(vec![bits, dim], rng.gaussian_vec(bits * dim, std))?,
            origin: HeadOrigin::Random,
        })
    }

    pub fn bits(&self) -> usize {
        self.weights.rows()
    }

    pub fn encode(&self, z: &Tensor<T>) -> Result<Vec<BitCode>> {
        encode_features(z, &self.weights)
    }
}

/// Parameter gradients for every layer of the feature network, plus the
/// gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// One entry per layer; `None` for parameter-free layers.
    pub layers: Vec<Option<ParamGrad<T>>>,
    pub input: Tensor<T>,
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    activations: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetConfig,
    input: Geometry,
    layers: Vec<Layer<T>>,
    pub classifier: Option<Classifier<T>>,
    pub hash_head: Option<HashHead<T>>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        // Heads attached after construction are part of the state, so
        // compare the config they imply rather than the one built from.
        self.state_config() == other.state_config()
            && self.layers == other.layers
            && self.classifier == other.classifier
            && self.hash_head == other.hash_head
    }
}

impl<T: Scalar> Network<T> {
    /// Builds the layer stack, checking that shapes chain, and draws
    /// initial weights from `rng`.
    pub fn new(config: &NetConfig, rng: &mut Rng) -> Result<Self> {
        let input = Geometry {
            channels: config.input.channels,
            height: config.input.height,
            width: config.input.width,
        };
        if input.is_empty() {
            return Err(Error::config("input geometry must be non-empty"));
        }
        let gain = config.init.gain;
        let mut geom = input;
        let mut layers = Vec::with_capacity(config.layers.len());
        for spec in &config.layers {
            let layer = match *spec {
                LayerSpec::Convolution {
                    outputs,
                    kernel,
                    stride,
                    pad,
                } => Layer::Conv(Conv::new(geom, outputs, kernel, stride, pad, gain, rng)?),
                LayerSpec::MaxPool {
                    kernel,
                    stride,
                    pad,
                } => Layer::Pool(Pool::new(PoolKind::Max, geom, kernel, stride, pad)?),
                LayerSpec::AvgPool {
                    kernel,
                    stride,
                    pad,
                } => Layer::Pool(Pool::new(PoolKind::Average, geom, kernel, stride, pad)?),
                LayerSpec::InnerProduct { outputs } => {
                    Layer::InnerProduct(InnerProduct::new(geom.len(), outputs, gain, rng)?)
                }
                LayerSpec::Relu => Layer::Relu(geom),
                LayerSpec::Lrn {
                    local_size,
                    alpha,
                    beta,
                    k,
                } => {
                    if local_size == 0 || local_size % 2 == 0 {
                        return Err(Error::config("lrn local size must be odd"));
                    }
                    Layer::Lrn(Lrn {
                        geom,
                        local_size,
                        alpha,
                        beta,
                        k,
                    })
                }
            };
            geom = layer.output_geometry();
            layers.push(layer);
        }
        let feature_dim = geom.len();
        let classifier = match config.softmax {
            Some(SoftmaxSpec { classes }) => {
                Some(Classifier::new(feature_dim, classes, gain, rng)?)
            }
            None => None,
        };
        let hash_head = match config.hash_head {
            Some(HashHeadSpec { bits }) => Some(HashHead::random(bits, feature_dim, gain, rng)?),
            None => None,
        };
        Ok(Network {
            config: config.clone(),
            input,
            layers,
            classifier,
            hash_head,
            cache: None,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// The configuration with its softmax and hash-head entries describing
    /// the heads currently attached, so rebuilding from it yields the same
    /// parameter shapes.
    pub fn state_config(&self) -> NetConfig {
        let mut c = self.config.clone();
        c.softmax = self.classifier.as_ref().map(|k| SoftmaxSpec {
            classes: k.classes(),
        });
        c.hash_head = self
            .hash_head
            .as_ref()
            .map(|h| HashHeadSpec { bits: h.bits() });
        c
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_geometry(&self) -> Geometry {
        self.input
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }

    /// Dimension of `z`, the response of the topmost feature layer.
    pub fn feature_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input.len(), |l| l.output_geometry().len())
    }

    /// Shape of each layer's output, in order.
    pub fn layer_geometries(&self) -> Vec<Geometry> {
        self.layers.iter().map(Layer::output_geometry).collect()
    }

    fn flatten_input(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let rows = batch.rows();
        if batch.shape().len() < 2 || batch.row_len() != self.input.len() {
            return Err(Error::dim(format!(
                "network expects samples of {}x{}x{}, got batch shape {:?}",
                self.input.channels,
                self.input.height,
                self.input.width,
                batch.shape()
            )));
        }
        Tensor::from_vec(vec![rows, self.input.len()], batch.data().to_vec())
    }

    fn run(&self, x: Tensor<T>, keep: bool) -> Result<(Tensor<T>, Option<ForwardCache<T>>)> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut current = x;
        for layer in &self.layers {
            let (next, a) = layer.forward(&current);
            if keep {
                activations.push(current);
                aux.push(a);
            }
            current = next;
        }
        if !current.is_finite() {
            return Err(Error::Training {
                epoch: 0,
                message: "non-finite activation in forward pass".into(),
            });
        }
        let cache = keep.then(|| {
            activations.push(current.clone());
            ForwardCache { activations, aux }
        });
        Ok((current, cache))
    }

    /// Forward pass that records activations for a following [`backward`].
    /// Returns `z` as a `batch x feature_dim` array.
    ///
    /// [`backward`]: Network::backward
    pub fn forward(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.flatten_input(batch)?;
        let (z, cache) = self.run(x, true)?;
        self.cache = cache;
        Ok(z)
    }

    /// Forward pass without caching; usable on a shared, frozen network.
    pub fn infer(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.flatten_input(batch)?;
        Ok(self.run(x, false)?.0)
    }

    /// Back-propagates `grad_z` through the cached forward pass.
    pub fn backward(&self, grad_z: &Tensor<T>) -> Result<Gradients<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        let z = cache.activations.last().expect("cache holds the output");
        if grad_z.shape() != z.shape() {
            return Err(Error::dim(format!(
                "gradient shape {:?} does not match cached output {:?}",
                grad_z.shape(),
                z.shape()
            )));
        }
        let mut grads = vec![None; self.layers.len()];
        let mut dy = grad_z.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.activations[idx];
            let y = &cache.activations[idx + 1];
            let (dx, g) = layer.backward(x, y, &cache.aux[idx], &dy);
            grads[idx] = g;
            dy = dx;
        }
        Ok(Gradients {
            layers: grads,
            input: dy,
        })
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Applies `theta <- theta - eta * grad` to every parameterised layer.
    pub fn apply_gradients(&mut self, grads: &Gradients<T>, eta: T) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::dim("gradient list does not match layer count"));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            if let (Some((w, b)), Some(g)) = (layer.params_mut(), g) {
                sgd_step_in_place(w, &g.weight, eta)?;
                sgd_step_in_place(b, &g.bias, eta)?;
            }
        }
        Ok(())
    }

    /// Hard codes for a batch of raw samples. Requires a hash head.
    pub fn encode(&self, batch: &Tensor<T>) -> Result<Vec<BitCode>> {
        let head = self
            .hash_head
            .as_ref()
            .ok_or_else(|| Error::config("network has no hash head"))?;
        head.encode(&self.infer(batch)?)
    }

    /// Named parameter blocks of the feature layers, in layer order.
    pub fn feature_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            if let Some((w, b)) = layer.params() {
                out.push((format!("layer{idx}.weight"), w));
                out.push((format!("layer{idx}.bias"), b));
            }
        }
        out
    }

    /// Every named parameter block, including the classifier and hash head.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.feature_params();
        if let Some(c) = &self.classifier {
            out.push(("classifier.weight".into(), &c.fc.weight));
            out.push(("classifier.bias".into(), &c.fc.bias));
        }
        if let Some(h) = &self.hash_head {
            out.push(("hash.weight".into(), &h.weights));
        }
        out
    }

    pub(crate) fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            if let Some((w, b)) = layer.params_mut() {
                out.push((format!("layer{idx}.weight"), w));
                out.push((format!("layer{idx}.bias"), b));
            }
        }
        if let Some(c) = &mut self.classifier {
            out.push(("classifier.weight".into(), &mut c.fc.weight));
            out.push(("classifier.bias".into(), &mut c.fc.bias));
        }
        if let Some(h) = &mut self.hash_head {
            out.push(("hash.weight".into(), &mut h.weights));
        }
        out
    }

    /// Mutable access to one feature-layer parameter block by flat index
    /// into [`feature_params`](Network::feature_params) order.
    pub fn feature_param_mut(&mut self, block: usize) -> Option<&mut Tensor<T>> {
        let mut i = 0;
        for layer in &mut self.layers {
            if let Some((w, b)) = layer.params_mut() {
                if i == block {
                    return Some(w);
                }
                if i + 1 == block {
                    return Some(b);
                }
                i += 2;
            }
        }
        None
    }

    /// Re-draws every feature-layer weight (biases zeroed) from `rng`.
    pub fn reinitialize(&mut self, rng: &mut Rng) -> Result<()> {
        let fresh = Network::new(&self.config, rng)?;
        self.layers = fresh.layers;
        self.cache = None;
        Ok(())
    }
}

impl<T: Scalar> Gradients<T> {
    /// Gradient blocks in [`Network::feature_params`] order.
    pub fn blocks(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| [&g.weight, &g.bias])
            .collect()
    }
}
