//! Desk-scale workbench for texture/color domain adaptation of grayscale
//! classifiers and for measuring their robustness under gradient-based
//! adversarial attacks.
//!
//! The crate is organized around a small dense-tensor engine with reverse-mode
//! automatic differentiation ([`tensor`]), GLCM texture descriptors and the
//! texture-preservation loss built on them ([`texture`]), the four-component
//! model stack ([`model`]), the attack suite ([`attack`]), data ingestion and
//! synthesis ([`data`]), the training loop ([`train`]) and robustness
//! reporting ([`report`]).

pub mod attack;
pub mod data;
pub mod error;
pub mod model;
pub mod report;
pub mod tensor;
pub mod texture;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, NodeId, Tensor};
