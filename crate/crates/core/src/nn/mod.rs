//! A small CNN with hand-written reverse-mode gradients: conv, ReLU, 2x2
//! max-pool, global average pooling and a linear head.

pub mod checkpoint;
pub mod gradcheck;
mod kernels;
pub mod layer;
pub mod loss;
pub mod network;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{gradcheck, synthetic_example, GradcheckOptions, GradcheckReport};
pub use layer::{Layer, LayerSpec, Shape3};
pub use loss::{loss_and_grad, predict, Target};
pub use network::{default_architecture, ForwardOutput, LossHead, Network};
pub use train::{batch_gradients, fit, Dataset, EpochLog, Example, TrainConfig, Trainer};
