//! Circle-representation instance segmentation for ball-shaped objects.
//!
//! The pipeline detects objects as bounding circles (center heatmap + local
//! offset + radius heads over a shared convolutional backbone), turns each
//! detected circle into an N-vertex contour proposal, and refines the
//! proposal with a circular-convolution contour network over three
//! deformation iterations. Everything runs on the CPU with an explicit,
//! finite-difference-verified backward pass per layer.
//!
//! Crate layout:
//!
//! - [`tensor`] / [`nn`] — minimal dense-tensor engine: conv2d, batch norm,
//!   relu, max pooling, bilinear sampling, Adam, and a gradient-check harness.
//! - [`geom`] — exact 2-D geometry: circles, contours, masks, minimal
//!   enclosing circles, circle IoU, lattice rotations.
//! - [`data`] — synthetic ball-shaped-object dataset generation, manifest
//!   I/O, and training-target rendering.
//! - [`detect`] — backbone + heatmap/offset/radius heads, detection losses,
//!   and peak decoding into scored circles.
//! - [`deform`] — circle contour proposals and the circular-convolution
//!   deformation network with its iterative loss.
//! - [`eval`] — circle-IoU / mask-IoU average precision, Dice, rotation
//!   consistency, ellipticity analysis, and report emission.
//! - [`train`] / [`commands`] — the training loop, checkpointing, and the
//!   operations behind the CLI subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod deform;
pub mod detect;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod geom;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
