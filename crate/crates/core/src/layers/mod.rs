//! Set architectures built on the tape.

mod batch;
mod dense;
mod equivariant;
mod invariant;
mod model;
mod theta;

pub(crate) use batch::is_permutation;
pub use batch::SetBatch;
pub use dense::{glorot_bound, Activation, Dense, LayerSpec, Mlp, ParamCursor};
pub use equivariant::{EquivariantLayer, EquivariantSpec, EquivariantStack, EquivariantVariant};
pub use invariant::{ConditionMode, InvariantModel, InvariantSpec, Pool};
pub use model::{Architecture, ModelFile, SetModel};
pub use theta::{build_theta, commutant_dimension, commutes_with_all_permutations};
