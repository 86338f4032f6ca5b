//! From-scratch convolutional networks in double precision.

pub mod arch;
pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use arch::{build_model, Arch, ModelConfig};
pub use layers::{softmax_cross_entropy, Layer, LayerCache, Mode};
pub use network::{Census, ForwardCache, Gradients, Network};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tensor::Tensor;
pub use train::{
    image_to_input, load_checkpoint, predict_proba, save_checkpoint, train_images, train_model, EpochStats,
    TrainConfig, TrainedModel,
};
