//! Declarative network specs, the architecture builders, the runnable
//! [`Network`] and weight-file serialisation.

mod builders;
mod network;
mod params;
mod spec;
mod weights;

pub use builders::{
    build_keypoint_net, build_lenet_classifier, build_nin_classifier, keypoint_spec, lenet_spec,
    nin_spec, BuildOptions, ModelConfig, KEYPOINT_OUTPUTS, KEYPOINT_SIDE,
};
pub use network::Network;
pub use params::NamedTensors;
pub use spec::{Head, LayerSpec, NetworkSpec};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, MAGIC, VERSION};
