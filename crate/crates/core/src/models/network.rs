use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::NamedTensors;
use super::spec::{Head, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::layers::{
    conv_forward, dense_backward, dense_forward, dropout_backward, dropout_forward, pool_backward,
    pool_forward, relu_backward, relu_forward, softmax, ConvParams, DenseParams, DropoutParams,
    KernelVariant, LayerCache, Mode, PoolParams,
};
use crate::tensor::{Scalar, Shape4, Tensor};

#[derive(Debug, Clone)]
enum Node<T: Scalar> {
    Conv { name: String, params: ConvParams<T> },
    Pool(PoolParams),
    Relu,
    Dense { name: String, params: DenseParams<T> },
    Dropout { keep_probability: f64 },
    GlobalAvgPool,
    Flatten,
    SoftmaxHead,
    LinearHead,
}

#[derive(Debug, Clone)]
enum NodeCache<T: Scalar> {
    Layer(LayerCache<T>),
    InputShape(Shape4),
    Nothing,
}

/// A runnable network built from a [`NetworkSpec`].
///
/// `forward` records per-layer caches that the next `backward` consumes.
/// `predict` runs in inference mode through `&self` and records nothing.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    spec: NetworkSpec,
    nodes: Vec<Node<T>>,
    mode: Mode,
    variant: KernelVariant,
    dropout_rng: ChaCha8Rng,
    caches: Vec<NodeCache<T>>,
    flip_gradient_sign: bool,
}

const DROPOUT_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

impl<T: Scalar> Network<T> {
    /// Builds the network with seeded uniform initialisation of all weights.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::new();
        let mut shape_in = spec.input.with_batch(1)?;
        let (mut n_conv, mut n_mlp, mut n_dense) = (0, 0, 0);
        for (layer, shape_out) in spec.layers.iter().zip(&shapes) {
            let mut made = Self::init_node(shape_in, layer, &mut rng)?;
            let mut k = 0;
            for node in &mut made {
                match (layer, node) {
                    (LayerSpec::Conv { .. }, Node::Conv { name, .. }) => {
                        n_conv += 1;
                        *name = format!("conv{n_conv}");
                    }
                    (LayerSpec::MlpConv { .. }, Node::Conv { name, .. }) => {
                        if k == 0 {
                            n_mlp += 1;
                        }
                        k += 1;
                        *name = format!("mlpconv{n_mlp}.conv{k}");
                    }
                    (LayerSpec::Dense { .. }, Node::Dense { name, .. }) => {
                        n_dense += 1;
                        *name = format!("dense{n_dense}");
                    }
                    _ => {}
                }
            }
            nodes.extend(made);
            shape_in = *shape_out;
        }
        Ok(Network {
            spec,
            nodes,
            mode: Mode::Train,
            variant: KernelVariant::Gemm,
            dropout_rng: ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM),
            caches: Vec::new(),
            flip_gradient_sign: false,
        })
    }

    fn init_node(input: Shape4, layer: &LayerSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Node<T>>> {
        let conv = |cin, cout, k, s, p, rng: &mut ChaCha8Rng| {
            ConvParams::init(cin, cout, (k, k), s, p, rng)
        };
        Ok(match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => vec![Node::Conv {
                name: String::new(),
                params: conv(input.c, out_channels, kernel, stride, padding, rng)?,
            }],
            LayerSpec::MlpConv {
                channels,
                kernel,
                padding,
            } => vec![
                Node::Conv {
                    name: String::new(),
                    params: conv(input.c, channels[0], kernel, 1, padding, rng)?,
                },
                Node::Relu,
                Node::Conv {
                    name: String::new(),
                    params: conv(channels[0], channels[1], 1, 1, 0, rng)?,
                },
                Node::Relu,
                Node::Conv {
                    name: String::new(),
                    params: conv(channels[1], channels[2], 1, 1, 0, rng)?,
                },
                Node::Relu,
            ],
            LayerSpec::Pool {
                window,
                stride,
                mode,
            } => vec![Node::Pool(PoolParams::new(window, stride, mode)?)],
            LayerSpec::Relu => vec![Node::Relu],
            LayerSpec::Dense { out_dim } => vec![Node::Dense {
                name: String::new(),
                params: DenseParams::init(input.item_len(), out_dim, rng)?,
            }],
            LayerSpec::Dropout { keep_probability } => vec![Node::Dropout { keep_probability }],
            LayerSpec::GlobalAvgPool => vec![Node::GlobalAvgPool],
            LayerSpec::Flatten => vec![Node::Flatten],
            LayerSpec::SoftmaxHead => vec![Node::SoftmaxHead],
            LayerSpec::LinearHead => vec![Node::LinearHead],
        })
    }

    /// Builds the network and overwrites every parameter with `params`.
    pub fn with_params(spec: NetworkSpec, params: &NamedTensors<T>) -> Result<Self> {
        let mut net = Self::new(spec, 0)?;
        net.load_params(params)?;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn head(&self) -> Head {
        self.spec.head().expect("validated spec has a head")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn set_variant(&mut self, variant: KernelVariant) {
        self.variant = variant;
    }

    /// Reseeds the random source used by dropout layers in train mode.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM);
    }

    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node {
                Node::Conv { name, params } => {
                    out.push((format!("{name}.weight"), &params.weights));
                    out.push((format!("{name}.bias"), &params.bias));
                }
                Node::Dense { name, params } => {
                    out.push((format!("{name}.weight"), &params.weights));
                    out.push((format!("{name}.bias"), &params.bias));
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            match node {
                Node::Conv { name, params } => {
                    out.push((format!("{name}.weight"), &mut params.weights));
                    out.push((format!("{name}.bias"), &mut params.bias));
                }
                Node::Dense { name, params } => {
                    out.push((format!("{name}.weight"), &mut params.weights));
                    out.push((format!("{name}.bias"), &mut params.bias));
                }
                _ => {}
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn export_params(&self) -> NamedTensors<T> {
        let mut out = NamedTensors::new();
        for (name, t) in self.parameters() {
            out.push(name, t.clone()).expect("network parameter names are unique");
        }
        out
    }

    /// Replaces all parameters; names and shapes must match exactly.
    pub fn load_params(&mut self, params: &NamedTensors<T>) -> Result<()> {
        let mine = self.parameters_mut();
        if mine.len() != params.len() {
            return Err(Error::Data(format!(
                "network has {} parameter tensors, file has {}",
                mine.len(),
                params.len()
            )));
        }
        for (name, slot) in mine {
            let src = params
                .get(&name)
                .ok_or_else(|| Error::Data(format!("missing parameter {name:?}")))?;
            if src.shape() != slot.shape() {
                return Err(Error::Shape(format!(
                    "parameter {name:?} has shape {}, network expects {}",
                    src.shape(),
                    slot.shape()
                )));
            }
            slot.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Conv { name, params } => Node::Conv {
                    name: name.clone(),
                    params: ConvParams {
                        in_channels: params.in_channels,
                        out_channels: params.out_channels,
                        kernel_h: params.kernel_h,
                        kernel_w: params.kernel_w,
                        stride: params.stride,
                        padding: params.padding,
                        weights: params.weights.cast(),
                        bias: params.bias.cast(),
                    },
                },
                Node::Dense { name, params } => Node::Dense {
                    name: name.clone(),
                    params: DenseParams {
                        in_dim: params.in_dim,
                        out_dim: params.out_dim,
                        weights: params.weights.cast(),
                        bias: params.bias.cast(),
                    },
                },
                Node::Pool(p) => Node::Pool(*p),
                Node::Relu => Node::Relu,
                Node::Dropout { keep_probability } => Node::Dropout {
                    keep_probability: *keep_probability,
                },
                Node::GlobalAvgPool => Node::GlobalAvgPool,
                Node::Flatten => Node::Flatten,
                Node::SoftmaxHead => Node::SoftmaxHead,
                Node::LinearHead => Node::LinearHead,
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            nodes,
            mode: self.mode,
            variant: self.variant,
            dropout_rng: self.dropout_rng.clone(),
            caches: Vec::new(),
            flip_gradient_sign: self.flip_gradient_sign,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        let e = self.spec.input;
        if (s.c, s.h, s.w) != (e.c, e.h, e.w) {
            return Err(Error::Shape(format!(
                "network {:?} expects (n, {}, {}, {}) input, got {s}",
                self.spec.name, e.c, e.h, e.w
            )));
        }
        Ok(())
    }

    /// Training-path forward; caches intermediates for [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.nodes.len());
        let mut cur = x.clone();
        for node in &self.nodes {
            let (out, cache) = Self::step(
                node,
                &cur,
                self.mode,
                self.variant,
                &mut self.dropout_rng,
            )?;
            caches.push(cache);
            cur = out;
        }
        self.caches = caches;
        Ok(cur)
    }

    /// Inference-mode forward pass that leaves the network untouched.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        // inference-mode dropout never draws from the random source
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let mut cur = x.clone();
        for node in &self.nodes {
            cur = Self::step(node, &cur, Mode::Inference, self.variant, &mut unused)?.0;
        }
        Ok(cur)
    }

    fn step(
        node: &Node<T>,
        x: &Tensor<T>,
        mode: Mode,
        variant: KernelVariant,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, NodeCache<T>)> {
        Ok(match node {
            Node::Conv { params, .. } => {
                let (y, c) = conv_forward(x, params, variant)?;
                (y, NodeCache::Layer(c))
            }
            Node::Pool(p) => {
                let (y, c) = pool_forward(x, p)?;
                (y, NodeCache::Layer(c))
            }
            Node::Relu => {
                let (y, c) = relu_forward(x);
                (y, NodeCache::Layer(c))
            }
            Node::Dense { params, .. } => {
                let (y, c) = dense_forward(x, params)?;
                (y, NodeCache::Layer(c))
            }
            Node::Dropout { keep_probability } => {
                let p = DropoutParams::new(*keep_probability, mode)?;
                let (y, c) = dropout_forward(x, &p, rng);
                (y, NodeCache::Layer(c))
            }
            Node::GlobalAvgPool => (x.reduce_mean_spatial(), NodeCache::InputShape(x.shape())),
            Node::Flatten => {
                let s = x.shape();
                (
                    x.clone().reshape(Shape4::vector(s.n, s.item_len())?)?,
                    NodeCache::InputShape(s),
                )
            }
            Node::SoftmaxHead => (softmax(x)?, NodeCache::Nothing),
            Node::LinearHead => (x.clone(), NodeCache::Nothing),
        })
    }

    /// Backpropagates `grad` through the cached forward pass and returns a
    /// gradient for every parameter, in [`Network::parameters`] order.
    ///
    /// For a softmax head, `grad` is taken with respect to the logits (the
    /// head's input), which is what [`crate::train::cross_entropy_loss`] returns.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<NamedTensors<T>> {
        if self.caches.len() != self.nodes.len() {
            return Err(Error::Shape(
                "backward called without a matching forward pass".into(),
            ));
        }
        let caches = std::mem::take(&mut self.caches);
        let mut cur = grad.clone();
        let mut grads: Vec<(String, Tensor<T>)> = Vec::new();
        for (i, (node, cache)) in self.nodes.iter().zip(caches).enumerate().rev() {
            let need_input = i > 0;
            cur = match (node, cache) {
                (Node::Conv { name, params }, NodeCache::Layer(c)) => {
                    let (gi, g) = crate::layers::conv_backward_impl(&cur, c, params, need_input)?;
                    grads.push((format!("{name}.bias"), g.bias));
                    grads.push((format!("{name}.weight"), g.weights));
                    match gi {
                        Some(gi) => gi,
                        None => break,
                    }
                }
                (Node::Dense { name, params }, NodeCache::Layer(c)) => {
                    let (gi, g) = dense_backward(&cur, c, params)?;
                    grads.push((format!("{name}.bias"), g.bias));
                    grads.push((format!("{name}.weight"), g.weights));
                    gi
                }
                (Node::Pool(_), NodeCache::Layer(c)) => pool_backward(&cur, c)?,
                (Node::Relu, NodeCache::Layer(c)) => relu_backward(&cur, c)?,
                (Node::Dropout { .. }, NodeCache::Layer(c)) => dropout_backward(&cur, c)?,
                (Node::GlobalAvgPool, NodeCache::InputShape(s)) => {
                    if cur.shape() != Shape4::new(s.n, s.c, 1, 1)? {
                        return Err(Error::Shape("global pool gradient shape".into()));
                    }
                    let area = s.plane_len() as f64;
                    let mut g = Tensor::zeros(s);
                    for (plane, &v) in g.data_mut().chunks_exact_mut(s.plane_len()).zip(cur.data()) {
                        plane.fill(T::from_f64(v.as_f64() / area));
                    }
                    g
                }
                (Node::Flatten, NodeCache::InputShape(s)) => cur.reshape(s)?,
                (Node::SoftmaxHead | Node::LinearHead, NodeCache::Nothing) => cur,
                _ => return Err(Error::Shape("layer cache does not match layer".into())),
            };
        }
        grads.reverse();
        if self.flip_gradient_sign {
            for (_, g) in &mut grads {
                g.map_in_place(|v| -v);
            }
        }
        let mut out = NamedTensors::new();
        for (name, t) in grads {
            out.push(name, t)?;
        }
        Ok(out)
    }

    /// Test hook: negate every parameter gradient returned by `backward`.
    #[doc(hidden)]
    pub fn inject_gradient_sign_flip(&mut self, on: bool) {
        self.flip_gradient_sign = on;
    }

    /// Fingerprint of the ReLU masks and max-pool argmax positions of the
    /// last forward pass. Two forward passes with equal fingerprints took the
    /// same branch at every non-differentiable point.
    pub fn activation_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for cache in &self.caches {
            match cache {
                NodeCache::Layer(LayerCache::Relu { mask }) => {
                    for &m in mask {
                        mix(m as u64);
                    }
                }
                NodeCache::Layer(LayerCache::Pool {
                    argmax: Some(idx), ..
                }) => {
                    for &i in idx {
                        mix(i as u64);
                    }
                }
                _ => {}
            }
        }
        h
    }
}
