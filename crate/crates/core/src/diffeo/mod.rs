//! Hermite-cubic diffeomorphisms of the torus and their compositions.

mod chain;
mod map;
mod project;

pub use chain::{chain_evaluate, MapChain};
pub(crate) use chain::push_through;
pub use map::DiffeoMap;
pub(crate) use map::PAR_CHUNK;
pub use project::project;
pub(crate) use project::{stencil_nodes, stencil_offsets};
