//! Estimation of single-photon path-entangled states from click counts.

pub mod bootstrap;
pub mod coherence;
pub mod fidelity;
pub mod fit;
pub mod hom;
pub mod reconstruct;

pub use bootstrap::*;
pub use coherence::*;
pub use fidelity::*;
pub use fit::*;
pub use hom::*;
pub use reconstruct::*;
