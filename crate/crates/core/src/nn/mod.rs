//! Batched feed-forward networks with Stage-Two augmentation.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod net;
pub mod policy;
pub mod presets;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, NetState};
pub use gradcheck::max_gradient_error;
pub use layer::{Activation, ConvShape, Layer, LayerKind};
pub use net::{AugmentableNet, BranchSpec, Grads, LayerSpec, NetSpec, SideSpec, Stage, Tape};
pub use policy::{action_distribution, sample_action, softmax, PolicyHead, PolicyNet};
