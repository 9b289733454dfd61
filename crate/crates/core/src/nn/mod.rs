//! Small fully-convolutional segmentation network with hand-written
//! backpropagation, the two training losses, Adam, and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod loss;
pub mod net;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use conv::Conv3x3;
pub use loss::{dice_loss, kd_loss, DICE_SMOOTH, TEACHER_CLAMP};
pub use net::{Grads, SegNet, Tape, DEFAULT_WIDTHS};
pub use tensor::Tensor;
