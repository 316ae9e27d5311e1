//! Dense tensors, the neural operations the GAN needs, and a single-use
//! reverse-mode tape.

mod dump;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod norm;
mod tensor;

pub use dump::{decode_tensor, encode_tensor, read_tensor, write_tensor, TNSR_MAGIC};
pub use gradcheck::grad_check;
pub use graph::{check_even_overlap, log_sigmoid, sigmoid, tanh, Fault, Graph, Var};
pub use norm::{BatchNormState, NormMode, BN_DECAY, BN_EPSILON};
pub use tensor::Tensor;
