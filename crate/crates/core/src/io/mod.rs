//! File formats: the STEN binary tensor container.

mod sten;

pub use sten::{read_tensor, read_tensor_from, write_tensor, write_tensor_to};
