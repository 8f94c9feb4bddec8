pub mod cli;
pub mod data;
pub mod error;
pub mod gof;
pub mod math;
pub mod models;
pub mod network;
pub mod sampler;
