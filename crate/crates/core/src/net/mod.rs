//! Dense network engine: layer kernels, SGF architectures, parameters and the forward and
//! backward passes.

pub mod arch;
pub mod model;
pub mod ops;
pub mod params;
pub mod tensor;

pub use arch::{build_sgf, AuxInput, LayerKind, LayerSpec, NetScale, NetworkSpec, Variant};
pub use model::{assemble_sgfe_input, backward, forward, frame_tensor, predict, variant_input, ForwardCache};
pub use ops::Crop;
pub use params::{Gradients, Param, ParamStore};
pub use tensor::Tensor;
