pub mod baselines;
pub mod csgmm;
pub mod csvae;
pub mod dictionary;
pub mod eval;
pub mod numerics;
pub mod parallel;
pub mod posterior;
pub mod sbl;
pub mod sensing;

pub use numerics::{Matrix, NumericsError, SeededRng};
