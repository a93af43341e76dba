pub mod bounds;
pub mod comb;
pub mod coupling;
pub mod distance;
pub mod error;
pub mod ewens;
pub mod matrix;
pub mod oracle;
pub mod par;
pub mod perm;

pub use error::{Error, Result};
pub use ewens::EwensParams;
pub use matrix::{RawMatrix, ScoreMatrix};
pub use perm::{CycleType, Permutation, SubsetPermutation};
