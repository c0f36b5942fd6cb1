pub mod driving;
pub mod geometry;
pub mod variation;
pub mod transfer;
pub mod regularity;
pub mod ergodic;
pub mod bounds;
pub mod cli;
