pub mod diagnostics;
pub mod error;
pub mod groups;
pub mod measure;
pub mod rng;
pub mod stable;
pub mod systems;
