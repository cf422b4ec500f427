//! Feed-forward / convolutional network representation.

mod flops;
mod io;
mod layer;
mod network;

pub use flops::{count_flops_params, layer_flops_params};
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use layer::{ActShape, Conv2d, Dense, Layer};
pub use network::{ActivationCapture, ForwardOutput, Network, PruneSite};
