//! Factorized Fourier neural operators pretrained on 1D PDE trajectories and
//! transferred to 2D.
//!
//! The pipeline is: [`datagen`] produces trajectories, [`training`] fits an
//! [`model::FfnoParams`], [`transfer`] lifts a 1D model to 2D and picks the
//! fine-tuning mask, and [`harness`] wires everything into runnable
//! experiments with persisted artifacts.

pub mod datagen;
pub mod error;
pub mod harness;
pub mod io;
mod linalg;
pub mod model;
pub mod scalar;
pub mod spectral;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};
pub use model::{forward, init_params, FfnoConfig, FfnoParams};
pub use scalar::Scalar;
pub use spectral::Field;
pub use transfer::FinetuneConfig;
